"""SSGF: a small little-endian binary container for gridded stacks.

Layout::

    b"SSGF"                       magic
    u16   version                 (currently 1)
    u8    dtype code              (1 = float32)
    u8    rank
    u32 * rank dims
    f64 * 4 lat_min, lat_max, lon_min, lon_max
    f64   res
    u32   n_times, then i64 * n_times  Unix epoch seconds
    u8    units tag               (0 raw, 1 percent, 2 W/m2)
    u8    mask present            (0 / 1)
    f32 * prod(dims)              row-major payload
    u8  * prod(dims)              mask bytes (1 = missing), only if present

The trailing two dims are always (n_lat, n_lon); the leading dim, when the
rank exceeds 2, is time.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from .geogrid import (GridSpec, FieldStack, Field, UNITS_RAW, UNITS_PERCENT, UNITS_WM2,
                      make_grid)

MAGIC = b"SSGF"
VERSION = 1
DTYPE_F32 = 1
_UNITS_CODE = {UNITS_RAW: 0, UNITS_PERCENT: 1, UNITS_WM2: 2}
_CODE_UNITS = {v: k for k, v in _UNITS_CODE.items()}


class SSGFError(ValueError):
    pass


@dataclass
class SSGFData:
    """Raw contents of an SSGF file. Unlike :class:`FieldStack` the time axis
    is not required to be hourly (monthly turbidity tables use 12 frames)."""

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray
    units: str = UNITS_RAW
    mask: np.ndarray | None = None

    def to_stack(self) -> FieldStack:
        values = self.values
        mask = self.mask
        if values.ndim == 2:
            values = values[None]
            mask = None if mask is None else mask[None]
        return FieldStack(self.grid, self.times, values, self.units, mask)

    def to_field(self, k: int = 0) -> Field:
        v = self.values if self.values.ndim == 2 else self.values[k]
        m = None
        if self.mask is not None:
            m = self.mask if self.mask.ndim == 2 else self.mask[k]
        t = int(self.times[k]) if len(self.times) else 0
        return Field(self.grid, t, v, self.units, m)


def dumps(grid: GridSpec, times, values, units: str = UNITS_RAW, mask=None) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim < 2 or values.shape[-2:] != grid.shape:
        raise SSGFError(f"payload shape {values.shape} does not end with grid shape {grid.shape}")
    times = np.asarray(times, dtype="<i8").reshape(-1)
    if units not in _UNITS_CODE:
        raise SSGFError(f"unknown units tag {units!r}")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HBB", VERSION, DTYPE_F32, values.ndim))
    buf.write(struct.pack(f"<{values.ndim}I", *values.shape))
    buf.write(struct.pack("<5d", grid.lat_min, grid.lat_max, grid.lon_min, grid.lon_max, grid.res))
    buf.write(struct.pack("<I", len(times)))
    buf.write(times.tobytes())
    buf.write(struct.pack("<BB", _UNITS_CODE[units], 0 if mask is None else 1))
    buf.write(values.tobytes())
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != values.shape:
            raise SSGFError("mask shape does not match payload")
        buf.write(np.ascontiguousarray(mask, dtype=np.uint8).tobytes())
    return buf.getvalue()


def loads(data: bytes, source: str = "<bytes>") -> SSGFData:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise SSGFError(f"{source}: truncated file (need {n} bytes at offset {pos})")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise SSGFError(f"{source}: bad magic, not an SSGF file")
    version, dtype, rank = struct.unpack("<HBB", take(4))
    if version != VERSION:
        raise SSGFError(f"{source}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise SSGFError(f"{source}: unsupported dtype code {dtype}")
    if rank < 2:
        raise SSGFError(f"{source}: rank {rank} < 2")
    dims = struct.unpack(f"<{rank}I", take(4 * rank))
    lat_min, lat_max, lon_min, lon_max, res = struct.unpack("<5d", take(40))
    grid = make_grid(lat_min, lat_max, lon_min, lon_max, res)
    if tuple(dims[-2:]) != grid.shape:
        raise SSGFError(f"{source}: dims {dims} disagree with grid {grid.shape}")
    (n_times,) = struct.unpack("<I", take(4))
    times = np.frombuffer(take(8 * n_times), dtype="<i8").astype(np.int64)
    units_code, has_mask = struct.unpack("<BB", take(2))
    if units_code not in _CODE_UNITS:
        raise SSGFError(f"{source}: unknown units code {units_code}")
    count = int(np.prod(dims))
    values = np.frombuffer(take(4 * count), dtype="<f4").astype(np.float32).reshape(dims)
    mask = None
    if has_mask:
        mask = np.frombuffer(take(count), dtype=np.uint8).reshape(dims).astype(bool)
    if pos != len(view):
        raise SSGFError(f"{source}: {len(view) - pos} trailing bytes")
    return SSGFData(grid, times, values, _CODE_UNITS[units_code], mask)


def write(path, obj) -> None:
    """Write a FieldStack, Field or SSGFData to ``path``."""
    if isinstance(obj, Field):
        payload = dumps(obj.grid, [obj.time], obj.values, obj.units, obj.mask)
    else:
        payload = dumps(obj.grid, obj.times, obj.values, obj.units, obj.mask)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def read(path) -> SSGFData:
    with open(path, "rb") as fh:
        return loads(fh.read(), os.fspath(path))


def read_stack(path) -> FieldStack:
    return read(path).to_stack()
