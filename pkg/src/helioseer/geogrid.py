"""Regular latitude/longitude grids, hourly time axes and bilinear regridding.

Longitudes are signed east-longitude throughout (west is negative), so the
CONUS box is ``lon_min=-126.00, lon_max=-68.55`` and no wraparound logic is
ever needed.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

UTC = _dt.timezone.utc
HOUR = 3600

# units tags shared with the SSGF format
UNITS_RAW = "raw"
UNITS_PERCENT = "percent"
UNITS_WM2 = "W/m2"
UNITS = (UNITS_RAW, UNITS_PERCENT, UNITS_WM2)

TimeLike = Union[int, np.integer, _dt.datetime, str]


class GridError(ValueError):
    """Raised for malformed grid geometry or mismatched grids."""


@dataclass(frozen=True)
class GridSpec:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    n_lat: int
    n_lon: int
    res: float

    def __post_init__(self):
        if not self.res > 0:
            raise GridError(f"resolution must be positive, got {self.res}")
        if self.n_lat < 1 or self.n_lon < 1:
            raise GridError(f"grid needs at least one cell, got {self.n_lat}x{self.n_lon}")
        if abs(self.lat_min + (self.n_lat - 1) * self.res - self.lat_max) > 1e-9:
            raise GridError("lat_min + (n_lat-1)*res does not reach lat_max")
        if abs(self.lon_min + (self.n_lon - 1) * self.res - self.lon_max) > 1e-9:
            raise GridError("lon_min + (n_lon-1)*res does not reach lon_max")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_lat, self.n_lon)

    @property
    def lats(self) -> np.ndarray:
        return self.lat_min + np.arange(self.n_lat, dtype=np.float64) * self.res

    @property
    def lons(self) -> np.ndarray:
        return self.lon_min + np.arange(self.n_lon, dtype=np.float64) * self.res

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (lat, lon) 2-D arrays of cell-center coordinates."""
        return np.meshgrid(self.lats, self.lons, indexing="ij")

    def contains(self, lat: float, lon: float, tol: float = 1e-9) -> bool:
        return (self.lat_min - tol <= lat <= self.lat_max + tol
                and self.lon_min - tol <= lon <= self.lon_max + tol)

    def same_as(self, other: "GridSpec", tol: float = 1e-9) -> bool:
        return (self.shape == other.shape
                and abs(self.res - other.res) <= tol
                and abs(self.lat_min - other.lat_min) <= tol
                and abs(self.lon_min - other.lon_min) <= tol)


def make_grid(lat_min: float, lat_max: float, lon_min: float, lon_max: float,
              res: float) -> GridSpec:
    """Build a grid from its bounds; spans must be integral multiples of ``res``."""
    if not res > 0:
        raise GridError(f"resolution must be positive, got {res}")
    if lat_max < lat_min or lon_max < lon_min:
        raise GridError(f"bounds not ordered: lat [{lat_min}, {lat_max}], lon [{lon_min}, {lon_max}]")
    counts = []
    for name, lo, hi in (("latitude", lat_min, lat_max), ("longitude", lon_min, lon_max)):
        steps = (hi - lo) / res
        if abs(steps - round(steps)) > 1e-6:
            raise GridError(f"{name} span {hi - lo!r} is not an integral multiple of res={res!r} "
                            f"({steps:.6f} cells)")
        counts.append(int(round(steps)) + 1)
    n_lat, n_lon = counts
    # recompute the upper bounds from the integer counts so the invariant is exact
    return GridSpec(float(lat_min), float(lat_min + (n_lat - 1) * res),
                    float(lon_min), float(lon_min + (n_lon - 1) * res),
                    n_lat, n_lon, float(res))


def conus_grid() -> GridSpec:
    """0.05 degree CONUS grid, 480 x 1150 cells."""
    return make_grid(26.00, 49.95, -126.00, -68.55, 0.05)


def toy_grid(n: int = 64) -> GridSpec:
    """Small n x n grid over central Texas at 0.05 degree."""
    return make_grid(30.0, 30.0 + (n - 1) * 0.05, -100.0, -100.0 + (n - 1) * 0.05, 0.05)


def cell_coords(grid: GridSpec, i: int, j: int) -> tuple[float, float]:
    if not (0 <= i < grid.n_lat and 0 <= j < grid.n_lon):
        raise IndexError(f"cell ({i}, {j}) outside {grid.n_lat}x{grid.n_lon} grid")
    return grid.lat_min + i * grid.res, grid.lon_min + j * grid.res


def cell_index(grid: GridSpec, lat: float, lon: float) -> tuple[float, float]:
    """Fractional (i, j) index of a coordinate; inverse of :func:`cell_coords`."""
    return (lat - grid.lat_min) / grid.res, (lon - grid.lon_min) / grid.res


# --- time -----------------------------------------------------------------

def to_epoch(t: TimeLike) -> int:
    """Convert a datetime, ISO-8601 string or epoch seconds to int epoch seconds (UTC)."""
    if isinstance(t, (int, np.integer)):
        return int(t)
    if isinstance(t, str):
        s = t.strip()
        if s.endswith("Z") or s.endswith("z"):
            s = s[:-1] + "+00:00"
        t = _dt.datetime.fromisoformat(s)
    if isinstance(t, _dt.datetime):
        if t.tzinfo is None:
            t = t.replace(tzinfo=UTC)
        return int(math.floor(t.timestamp()))
    raise TypeError(f"cannot interpret {t!r} as a timestamp")


def to_datetime(t: TimeLike) -> _dt.datetime:
    return _dt.datetime.fromtimestamp(to_epoch(t), tz=UTC)


def isoformat(t: TimeLike) -> str:
    return to_datetime(t).strftime("%Y-%m-%dT%H:%M:%SZ")


def day_of_year(t: TimeLike) -> int:
    return to_datetime(t).timetuple().tm_yday


def fractional_hour(t: TimeLike) -> float:
    d = to_datetime(t)
    return d.hour + d.minute / 60.0 + d.second / 3600.0


def hourly_times(start: TimeLike, n: int) -> np.ndarray:
    return to_epoch(start) + HOUR * np.arange(n, dtype=np.int64)


# --- fields ---------------------------------------------------------------

@dataclass
class Field:
    grid: GridSpec
    time: int
    values: np.ndarray
    units: str = UNITS_RAW
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.time = to_epoch(self.time)
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.shape != self.grid.shape:
            raise GridError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if self.units not in UNITS:
            raise ValueError(f"unknown units tag {self.units!r}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.grid.shape:
                raise GridError("mask shape does not match grid")
        if self.units == UNITS_PERCENT:
            v = self.values if self.mask is None else self.values[~self.mask]
            if v.size and (v.min() < 0 or v.max() > 100):
                raise ValueError("cloud-percent field has values outside [0, 100]")

    @property
    def valid(self) -> np.ndarray:
        return np.ones(self.grid.shape, bool) if self.mask is None else ~self.mask


@dataclass
class FieldStack:
    """Hourly sequence of fields on one grid; ``values`` is (T, n_lat, n_lon) or
    (T, C, n_lat, n_lon) for multi-channel stacks such as satellite bands."""

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray
    units: str = UNITS_RAW
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray([to_epoch(t) for t in np.atleast_1d(self.times)], dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim not in (3, 4):
            raise GridError(f"stack values must be 3-D or 4-D, got shape {self.values.shape}")
        if self.values.shape[0] != len(self.times):
            raise GridError(f"{self.values.shape[0]} frames but {len(self.times)} timestamps")
        if self.values.shape[-2:] != self.grid.shape:
            raise GridError(f"frame shape {self.values.shape[-2:]} does not match grid {self.grid.shape}")
        if len(self.times) > 1 and not np.all(np.diff(self.times) == HOUR):
            raise GridError("stack timestamps must be strictly increasing with 1-hour spacing")
        if self.units not in UNITS:
            raise ValueError(f"unknown units tag {self.units!r}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.values.shape:
                raise GridError("mask shape does not match values")

    def __len__(self) -> int:
        return len(self.times)

    def field(self, k: int) -> Field:
        if self.values.ndim != 3:
            raise GridError("field() needs a single-channel stack")
        return Field(self.grid, int(self.times[k]), self.values[k], self.units,
                     None if self.mask is None else self.mask[k])

    def index_of(self, t: TimeLike) -> int:
        t = to_epoch(t)
        k = (t - int(self.times[0])) // HOUR
        if k < 0 or k >= len(self.times) or self.times[k] != t:
            raise KeyError(f"{isoformat(t)} not in stack")
        return int(k)

    def window(self, start: TimeLike, n: int) -> "FieldStack":
        k = self.index_of(start)
        if k + n > len(self.times):
            raise KeyError(f"stack ends before {n} hours from {isoformat(start)}")
        return FieldStack(self.grid, self.times[k:k + n], self.values[k:k + n], self.units,
                          None if self.mask is None else self.mask[k:k + n])

    @classmethod
    def from_fields(cls, fields: Sequence[Field]) -> "FieldStack":
        if not fields:
            raise GridError("empty field sequence")
        grid = fields[0].grid
        for f in fields[1:]:
            if not f.grid.same_as(grid):
                raise GridError("fields do not share a grid")
        masks = [f.mask for f in fields]
        mask = None if all(m is None for m in masks) else np.stack([f.valid for f in fields]) == 0
        return cls(grid, [f.time for f in fields], np.stack([f.values for f in fields]),
                   fields[0].units, mask)


# --- interpolation --------------------------------------------------------

def _bilinear_weights(pos: np.ndarray, n: int):
    """Lower index and fractional weight for positions along one axis (clamped)."""
    pos = np.clip(pos, 0.0, n - 1)
    lo = np.floor(pos).astype(np.int64)
    lo = np.minimum(lo, max(n - 2, 0))
    frac = pos - lo
    if n == 1:
        frac = np.zeros_like(pos)
    hi = np.minimum(lo + 1, n - 1)
    # snap tiny float noise so exact cell-center hits return the cell value bit-for-bit
    frac = np.where(np.abs(frac) < 1e-9, 0.0, frac)
    frac = np.where(np.abs(frac - 1.0) < 1e-9, 1.0, frac)
    return lo, hi, frac


def bilinear_sample(values: np.ndarray, grid: GridSpec, lats, lons,
                    mask: np.ndarray | None = None):
    """Sample ``values[..., n_lat, n_lon]`` at arbitrary coordinates.

    Returns ``(samples, out_mask)`` with samples shaped ``values.shape[:-2] + lats.shape``.
    A sample is masked when any of its contributing corners is masked.
    """
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    fi, fj = cell_index(grid, lats, lons)
    i0, i1, wi = _bilinear_weights(np.asarray(fi), grid.n_lat)
    j0, j1, wj = _bilinear_weights(np.asarray(fj), grid.n_lon)
    v = np.asarray(values, dtype=np.float64)
    out = ((1 - wi) * (1 - wj) * v[..., i0, j0] + (1 - wi) * wj * v[..., i0, j1]
           + wi * (1 - wj) * v[..., i1, j0] + wi * wj * v[..., i1, j1])
    # exact hits on a single corner reproduce that value without rounding
    exact = (wi == 0) & (wj == 0)
    out = np.where(exact, v[..., i0, j0], out)
    out_mask = None
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        # corners with zero weight do not contribute
        out_mask = ((m[..., i0, j0] & ((1 - wi) * (1 - wj) > 0))
                    | (m[..., i0, j1] & ((1 - wi) * wj > 0))
                    | (m[..., i1, j0] & (wi * (1 - wj) > 0))
                    | (m[..., i1, j1] & (wi * wj > 0)))
    return out, out_mask


def _check_overlap(src: GridSpec, dst: GridSpec):
    if (dst.lat_max < src.lat_min or dst.lat_min > src.lat_max
            or dst.lon_max < src.lon_min or dst.lon_min > src.lon_max):
        raise GridError("destination grid is disjoint from source grid")


def bilinear_regrid(src: Field, dst_grid: GridSpec) -> Field:
    """Bilinear interpolation of ``src`` onto the cell centers of ``dst_grid``.

    Destination centers outside the source box are clamped to the edge cells.
    """
    _check_overlap(src.grid, dst_grid)
    if src.grid.same_as(dst_grid):
        return Field(dst_grid, src.time, src.values.copy(), src.units,
                     None if src.mask is None else src.mask.copy())
    lat, lon = dst_grid.mesh()
    out, out_mask = bilinear_sample(src.values, src.grid, lat, lon, src.mask)
    out = out.astype(np.float32)
    if out_mask is not None:
        out = np.where(out_mask, np.float32(0), out)
    return Field(dst_grid, src.time, out, src.units, out_mask)


def regrid_stack(stack: FieldStack, dst_grid: GridSpec) -> FieldStack:
    _check_overlap(stack.grid, dst_grid)
    if stack.grid.same_as(dst_grid):
        return FieldStack(dst_grid, stack.times.copy(), stack.values.copy(), stack.units,
                          None if stack.mask is None else stack.mask.copy())
    lat, lon = dst_grid.mesh()
    out, out_mask = bilinear_sample(stack.values, stack.grid, lat, lon, stack.mask)
    out = out.astype(np.float32)
    if out_mask is not None:
        out = np.where(out_mask, np.float32(0), out)
    return FieldStack(dst_grid, stack.times.copy(), out, stack.units, out_mask)
