"""Flat ``key=value`` text configs with ``#`` comments."""

from __future__ import annotations

import os


class KVError(ValueError):
    pass


def parse_kv(text: str, source: str = "<text>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise KVError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise KVError(f"{source}:{lineno}: empty key")
        if key in out:
            raise KVError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read(), os.fspath(path))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def format_kv(d: dict) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in d.items())


def write_kv(path, d: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_kv(d))


def parse_value(value, typ):
    """Convert a string to the annotated dataclass field type (given as a string)."""
    if not isinstance(value, str):
        return value
    t = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    t = t.replace(" ", "")
    try:
        if t == "int":
            return int(value)
        if t == "float":
            return float(value)
        if t == "bool":
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ValueError(value)
        if t.startswith("tuple[float") or t.startswith("tuple[int"):
            conv = float if "float" in t else int
            return tuple(conv(x) for x in value.split(",") if x.strip())
    except ValueError:
        raise KVError(f"cannot parse {value!r} as {t}") from None
    return value
