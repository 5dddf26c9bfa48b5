"""Channel-wise standardization of satellite inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BAND_NAMES = ("band1", "band2", "band3", "band4")


class NormError(ValueError):
    pass


@dataclass(frozen=True)
class NormStats:
    mean: tuple[float, ...]
    std: tuple[float, ...]
    clearsky_scale: float = 1000.0

    def __post_init__(self):
        if len(self.mean) != len(self.std):
            raise NormError("mean and std must have one entry per channel")
        for k, s in enumerate(self.std):
            if not s > 0:
                raise NormError(f"channel {k} ({_name(k)}) has non-positive std {s}")
        if not self.clearsky_scale > 0:
            raise NormError("clearsky_scale must be positive")

    @property
    def n_channels(self) -> int:
        return len(self.mean)

    def to_metadata(self) -> dict:
        return {"norm_mean": ",".join(repr(float(m)) for m in self.mean),
                "norm_std": ",".join(repr(float(s)) for s in self.std),
                "clearsky_scale": repr(float(self.clearsky_scale))}

    @classmethod
    def from_metadata(cls, meta: dict) -> "NormStats":
        try:
            mean = tuple(float(v) for v in meta["norm_mean"].split(","))
            std = tuple(float(v) for v in meta["norm_std"].split(","))
            scale = float(meta.get("clearsky_scale", 1000.0))
        except KeyError as exc:
            raise NormError(f"checkpoint metadata lacks normalization key {exc}") from None
        return cls(mean, std, scale)


def _name(k: int) -> str:
    return BAND_NAMES[k] if k < len(BAND_NAMES) else f"channel{k}"


def fit_norm(satellite: np.ndarray, clearsky_scale: float = 1000.0) -> NormStats:
    """Per-channel mean/std of a (T, C, H, W) satellite array (or a dataset with
    a ``satellite`` attribute)."""
    sat = getattr(satellite, "satellite", satellite)
    sat = np.asarray(sat)
    if sat.ndim != 4 or sat.shape[0] == 0:
        raise NormError(f"need a nonempty (T, C, H, W) array, got shape {sat.shape}")
    x = sat.astype(np.float64)
    mean = x.mean(axis=(0, 2, 3))
    std = x.std(axis=(0, 2, 3))
    for k, s in enumerate(std):
        if not s > 1e-12 * max(1.0, abs(mean[k])):
            raise NormError(f"zero variance in satellite channel {k} ({_name(k)}); cannot standardize")
    return NormStats(tuple(float(m) for m in mean), tuple(float(s) for s in std), clearsky_scale)


def _broadcast(stats: NormStats, x: np.ndarray):
    x = np.asarray(x)
    axis = {3: 0, 4: 1}.get(x.ndim)
    if axis is None or x.shape[axis] != stats.n_channels:
        raise NormError(f"array of shape {x.shape} does not carry {stats.n_channels} channels "
                        "on the channel axis ((C,H,W) or (T,C,H,W))")
    shape = [1] * x.ndim
    shape[axis] = stats.n_channels
    return (np.asarray(stats.mean).reshape(shape), np.asarray(stats.std).reshape(shape))


def apply_norm(stats: NormStats, x: np.ndarray) -> np.ndarray:
    mean, std = _broadcast(stats, x)
    return ((np.asarray(x, dtype=np.float64) - mean) / std).astype(np.float32)


def invert_norm(stats: NormStats, z: np.ndarray) -> np.ndarray:
    mean, std = _broadcast(stats, z)
    return (np.asarray(z, dtype=np.float64) * std + mean).astype(np.float32)
