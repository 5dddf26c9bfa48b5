"""Run manifests written beside every CLI output.

A manifest is a JSON document recording the subcommand, the fully resolved
configuration, the exact argument vector (paths made absolute), input and
output paths, the seed, the tool version, wall-clock timings and a SHA-256
digest of each output file. Re-running from the manifest must reproduce the
digests exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
from dataclasses import asdict, dataclass, field

from . import __version__

MANIFEST_NAME = "manifest.json"
MANIFEST_SUFFIX = ".manifest.json"


class ManifestError(ValueError):
    pass


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    argv: list[str]
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)     # relative name -> sha256
    out_target: str = ""
    seed: int | None = None
    tool_version: str = __version__
    timings: dict = field(default_factory=dict)
    environment: dict = field(default_factory=lambda: {"python": platform.python_version()})

    def record_outputs(self, paths, root, is_dir: bool = True) -> None:
        """Digest each output. Directory targets key files by their path inside
        the directory; file targets key the target and its sidecars as
        ``$OUT`` plus suffix so a rerun into another name compares cleanly."""
        for p in sorted(paths):
            self.outputs[output_key(p, root, is_dir)] = file_digest(p)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        tmp = f"{os.fspath(path)}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
        os.replace(tmp, path)

    @classmethod
    def read(cls, path) -> "RunManifest":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: not valid JSON ({exc})") from None
        missing = {"subcommand", "argv", "config"} - set(data)
        if missing:
            raise ManifestError(f"{path}: manifest lacks {sorted(missing)}")
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


def output_key(path: str, target: str, is_dir: bool) -> str:
    if is_dir:
        return os.path.relpath(path, target)
    if path.startswith(target):
        return "$OUT" + path[len(target):]
    return os.path.basename(path)


def manifest_path_for(out: str, is_dir: bool) -> str:
    return os.path.join(out, MANIFEST_NAME) if is_dir else f"{out}{MANIFEST_SUFFIX}"


def compare_outputs(expected: dict, actual: dict) -> list[str]:
    """Names whose digests differ or that are missing on either side."""
    diffs = []
    for name in sorted(set(expected) | set(actual)):
        if expected.get(name) != actual.get(name):
            diffs.append(name)
    return diffs
