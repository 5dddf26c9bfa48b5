"""SSCK checkpoint files.

Layout (little-endian)::

    b"SSCK"  u16 version
    u32 length + UTF-8 text      key=value lines: model config, then "meta.*" keys
    u32 parameter count
    per parameter: u16 name length + UTF-8 name, u8 rank, u32 * rank dims, f32 payload
"""

from __future__ import annotations

import io
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field, fields

import numpy as np

from ..kvconfig import parse_kv, format_kv
from .config import ModelConfig

MAGIC = b"SSCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    params: "OrderedDict[str, np.ndarray]"
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model, metadata: dict | None = None) -> "Checkpoint":
        return cls(model.cfg, model.state_dict(), dict(metadata or {}))

    @classmethod
    def init(cls, cfg: ModelConfig, metadata: dict | None = None) -> "Checkpoint":
        from .network import SolarSeer
        return cls.from_model(SolarSeer(cfg), metadata)

    def build_model(self):
        from .network import SolarSeer
        model = SolarSeer(self.config)
        model.load_state_dict(self.params)
        return model

    def num_elements(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def validate(self) -> None:
        """Every parameter the architecture names must be present once with its shape."""
        from .network import SolarSeer
        expected = OrderedDict((n, p.shape) for n, p in SolarSeer(self.config).named_parameters())
        missing = [n for n in expected if n not in self.params]
        extra = [n for n in self.params if n not in expected]
        if missing or extra:
            raise CheckpointError(f"parameter set mismatch; missing={missing[:5]} unexpected={extra[:5]}")
        for n, shape in expected.items():
            if self.params[n].shape != shape:
                raise CheckpointError(f"{n}: shape {self.params[n].shape} != {shape}")

    # --- serialization
    def to_bytes(self) -> bytes:
        text = self.config.to_kv() + format_kv({f"meta.{k}": v for k, v in self.metadata.items()})
        raw = text.encode("utf-8")
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<H", VERSION))
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", len(self.params)))
        for name, arr in self.params.items():
            nb = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype="<f4")
            buf.write(struct.pack("<H", len(nb)))
            buf.write(nb)
            buf.write(struct.pack("<B", arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(arr.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, source: str = "<bytes>") -> "Checkpoint":
        view = memoryview(data)
        pos = 0

        def take(n):
            nonlocal pos
            if pos + n > len(view):
                raise CheckpointError(f"{source}: truncated checkpoint")
            chunk = view[pos:pos + n]
            pos += n
            return chunk

        if bytes(take(4)) != MAGIC:
            raise CheckpointError(f"{source}: bad magic, not an SSCK checkpoint")
        (version,) = struct.unpack("<H", take(2))
        if version != VERSION:
            raise CheckpointError(f"{source}: unsupported checkpoint version {version}")
        (n_text,) = struct.unpack("<I", take(4))
        kv = parse_kv(bytes(take(n_text)).decode("utf-8"), source)
        cfg_keys = {f.name for f in fields(ModelConfig)}
        config = ModelConfig.from_dict({k: v for k, v in kv.items() if k in cfg_keys})
        metadata = {k[5:]: v for k, v in kv.items() if k.startswith("meta.")}
        unknown = [k for k in kv if k not in cfg_keys and not k.startswith("meta.")]
        if unknown:
            raise CheckpointError(f"{source}: unknown header keys {unknown}")
        (count,) = struct.unpack("<I", take(4))
        params = OrderedDict()
        for _ in range(count):
            (nlen,) = struct.unpack("<H", take(2))
            name = bytes(take(nlen)).decode("utf-8")
            (rank,) = struct.unpack("<B", take(1))
            dims = struct.unpack(f"<{rank}I", take(4 * rank))
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(take(4 * n), dtype="<f4").astype(np.float32).reshape(dims)
            if name in params:
                raise CheckpointError(f"{source}: duplicate parameter {name!r}")
            params[name] = arr
        if pos != len(view):
            raise CheckpointError(f"{source}: trailing bytes")
        ck = cls(config, params, metadata)
        ck.validate()
        return ck

    def save(self, path) -> None:
        tmp = f"{os.fspath(path)}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(self.to_bytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), os.fspath(path))
