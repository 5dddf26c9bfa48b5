"""Synthetic cloud/irradiance/satellite data with advected Gaussian cloud blobs.

Cloud cover is a clipped sum of Gaussian blobs that drift at constant
per-blob velocities on a periodic domain and fade in and out over their
lifetime. Irradiance is clear-sky GHI attenuated by cloud,
``clearsky * (1 - alpha * cloud / 100)``, and the four satellite bands are
affine in cloud with a sun-driven offset and Gaussian noise.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields

import numpy as np

from .. import ssgf
from ..clearsky import clearsky_stack, zenith_stack, DEFAULT_TL
from ..geogrid import (GridSpec, FieldStack, make_grid, toy_grid, to_epoch, isoformat, HOUR,
                       UNITS_PERCENT, UNITS_WM2, UNITS_RAW)
from ..kvconfig import format_kv, parse_value, read_kv


@dataclass
class SynthConfig:
    lat_min: float = 30.0
    lat_max: float = 33.15
    lon_min: float = -100.0
    lon_max: float = -96.85
    res: float = 0.05
    start: str = "2023-06-01T00:00:00Z"
    n_days: int = 30
    seed: int = 0
    blob_count: tuple[int, int] = (4, 9)        # simultaneously active blobs
    velocity: tuple[float, float] = (-1.0, 1.0)  # cells/hour, per component
    radius: tuple[float, float] = (4.0, 10.0)    # cells (Gaussian sigma)
    amplitude: tuple[float, float] = (60.0, 130.0)
    lifetime: tuple[float, float] = (18.0, 60.0)  # hours
    alpha: float = 0.8
    noise: float = 2.0
    gains: tuple[float, float, float, float] = (1.0, -0.6, 0.8, -1.0)
    offsets: tuple[float, float, float, float] = (30.0, 10.0, 0.0, 5.0)
    turbidity: float = DEFAULT_TL
    elevation: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, parse_value(getattr(self, f.name), f.type))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.noise < 0:
            raise ValueError("noise sigma must be >= 0")
        if self.n_days < 1:
            raise ValueError("n_days must be >= 1")
        if len(self.gains) != 4 or len(self.offsets) != 4:
            raise ValueError("need exactly four band gains and offsets")
        self.start = isoformat(self.start)

    @property
    def grid(self) -> GridSpec:
        return make_grid(self.lat_min, self.lat_max, self.lon_min, self.lon_max, self.res)

    @property
    def n_hours(self) -> int:
        return 24 * self.n_days

    def replace(self, **kw) -> "SynthConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_kv(self) -> str:
        return format_kv(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValueError(f"unknown synth config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        return cls.from_dict(read_kv(path))

    @classmethod
    def toy(cls, **kw) -> "SynthConfig":
        g = toy_grid(64)
        return cls(lat_min=g.lat_min, lat_max=g.lat_max, lon_min=g.lon_min, lon_max=g.lon_max,
                   res=g.res, **kw)


@dataclass
class SynthDataset:
    config: SynthConfig
    grid: GridSpec
    times: np.ndarray
    satellite: np.ndarray   # (T, 4, H, W)
    cloud: np.ndarray       # (T, H, W) percent
    irradiance: np.ndarray  # (T, H, W) W/m2
    clearsky: np.ndarray    # (T, H, W) W/m2

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, k: int) -> dict:
        return {"time": int(self.times[k]), "satellite": self.satellite[k],
                "cloud": self.cloud[k], "irradiance": self.irradiance[k]}

    def stack(self, name: str) -> FieldStack:
        units = {"satellite": UNITS_RAW, "cloud": UNITS_PERCENT, "irradiance": UNITS_WM2,
                 "clearsky": UNITS_WM2}[name]
        return FieldStack(self.grid, self.times, getattr(self, name), units)

    def day_index(self) -> np.ndarray:
        return (self.times - self.times[0]) // (24 * HOUR)


def _blob_population(cfg: SynthConfig, H: int, W: int, rng: np.random.Generator):
    """Blob parameters with births spread so the mean active count sits in blob_count."""
    t_total = cfg.n_hours
    mean_life = 0.5 * (cfg.lifetime[0] + cfg.lifetime[1])
    target = 0.5 * (cfg.blob_count[0] + cfg.blob_count[1])
    span = t_total + cfg.lifetime[1]
    n = max(1, int(round(target * span / mean_life)))
    birth = rng.uniform(-cfg.lifetime[1], t_total, size=n)
    life = rng.uniform(*cfg.lifetime, size=n)
    y0 = rng.uniform(0, H, size=n)
    x0 = rng.uniform(0, W, size=n)
    vy = rng.uniform(*cfg.velocity, size=n)
    vx = rng.uniform(*cfg.velocity, size=n)
    radius = rng.uniform(*cfg.radius, size=n)
    amp = rng.uniform(*cfg.amplitude, size=n)
    order = np.argsort(birth, kind="stable")
    return {k: v[order] for k, v in dict(birth=birth, life=life, y0=y0, x0=x0, vy=vy, vx=vx,
                                          radius=radius, amp=amp).items()}


def cloud_field(blobs: dict, t: float, H: int, W: int) -> np.ndarray:
    """Cloud cover percent at hour ``t`` (hours since dataset start)."""
    iy = np.arange(H, dtype=np.float64)[:, None]
    ix = np.arange(W, dtype=np.float64)[None, :]
    out = np.zeros((H, W))
    age = t - blobs["birth"]
    active = np.nonzero((age >= 0) & (age <= blobs["life"]))[0]
    for b in active:
        env = np.sin(np.pi * age[b] / blobs["life"][b])
        cy = (blobs["y0"][b] + blobs["vy"][b] * age[b]) % H
        cx = (blobs["x0"][b] + blobs["vx"][b] * age[b]) % W
        # periodic (wraparound) distance
        dy = np.abs(iy - cy)
        dy = np.minimum(dy, H - dy)
        dx = np.abs(ix - cx)
        dx = np.minimum(dx, W - dx)
        r2 = blobs["radius"][b] ** 2
        out += blobs["amp"][b] * env * np.exp(-(dy * dy + dx * dx) / (2 * r2))
    return np.clip(out, 0.0, 100.0)


def synth_dataset(cfg: SynthConfig) -> SynthDataset:
    grid = cfg.grid
    H, W = grid.shape
    rng = np.random.default_rng(cfg.seed)
    blobs = _blob_population(cfg, H, W, rng)
    t_start = to_epoch(cfg.start)
    T = cfg.n_hours
    times = t_start + HOUR * np.arange(T, dtype=np.int64)
    cloud = np.stack([cloud_field(blobs, float(k), H, W) for k in range(T)]).astype(np.float32)
    cs = clearsky_stack(grid, t_start, T, elevation=cfg.elevation, turbidity=cfg.turbidity,
                        first_lead=0).values
    irr = (cs.astype(np.float64) * (1.0 - cfg.alpha * cloud.astype(np.float64) / 100.0)).astype(np.float32)
    sun = np.maximum(np.cos(np.radians(zenith_stack(grid, times))), 0.0)
    gains = np.asarray(cfg.gains, dtype=np.float64)[None, :, None, None]
    offsets = np.asarray(cfg.offsets, dtype=np.float64)[None, :, None, None]
    noise_rng = np.random.default_rng([cfg.seed, 1])
    sat = (gains * cloud[:, None].astype(np.float64) + offsets * sun[:, None]
           + noise_rng.normal(0.0, cfg.noise, size=(T, 4, H, W))).astype(np.float32)
    return SynthDataset(cfg, grid, times, sat, cloud, irr, cs)


# --- persistence ----------------------------------------------------------

DATASET_FILES = ("satellite", "cloud", "irradiance", "clearsky")


def save_dataset(ds: SynthDataset, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name in DATASET_FILES:
        ssgf.write(os.path.join(out_dir, f"{name}.ssgf"), ds.stack(name))
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(ds.config.to_kv())


def load_dataset(data_dir) -> SynthDataset:
    cfg = SynthConfig.from_file(os.path.join(data_dir, "manifest.txt"))
    stacks = {name: ssgf.read_stack(os.path.join(data_dir, f"{name}.ssgf")) for name in DATASET_FILES}
    ref = stacks["cloud"]
    for name, st in stacks.items():
        if not st.grid.same_as(ref.grid) or not np.array_equal(st.times, ref.times):
            raise ValueError(f"{data_dir}: {name}.ssgf does not align with cloud.ssgf")
    return SynthDataset(cfg, ref.grid, ref.times, stacks["satellite"].values, ref.values,
                        stacks["irradiance"].values, stacks["clearsky"].values)
