"""Station-based verification: sample gridded forecasts at station sites.

Station CSV files carry the header ``station_id,lat,lon,timestamp,ghi_wm2``
with ISO-8601 UTC timestamps; an empty ``ghi_wm2`` marks a missing value.
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..geogrid import FieldStack, GridSpec, bilinear_sample, cell_index, isoformat, to_epoch
from .metrics import MetricError

STATION_HEADER = ("station_id", "lat", "lon", "timestamp", "ghi_wm2")
SAMPLERS = ("bilinear", "nearest")


class StationError(ValueError):
    pass


@dataclass
class StationRecord:
    station_id: str
    lat: float
    lon: float
    times: np.ndarray   # int64 epoch seconds, strictly increasing
    ghi: np.ndarray     # float64, NaN where missing

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.ghi = np.asarray(self.ghi, dtype=np.float64)
        if self.times.shape != self.ghi.shape or self.times.ndim != 1:
            raise StationError(f"station {self.station_id}: times and ghi must be 1-D and aligned")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise StationError(f"station {self.station_id}: timestamps not strictly increasing")
        present = self.ghi[np.isfinite(self.ghi)]
        if present.size and present.min() < 0:
            raise StationError(f"station {self.station_id}: negative GHI observation")

    @property
    def missing(self) -> np.ndarray:
        return ~np.isfinite(self.ghi)

    def lookup(self, times) -> np.ndarray:
        """Observations at ``times`` (NaN where absent or missing)."""
        times = np.asarray(times, dtype=np.int64)
        idx = np.searchsorted(self.times, times)
        idx_c = np.minimum(idx, len(self.times) - 1)
        hit = (idx < len(self.times)) & (self.times[idx_c] == times) if len(self.times) else \
            np.zeros(times.shape, bool)
        out = np.full(times.shape, np.nan)
        out[hit] = self.ghi[idx_c[hit]]
        return out


def read_stations(path) -> list[StationRecord]:
    rows: "OrderedDict[str, list]" = OrderedDict()
    coords: dict[str, tuple[float, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != STATION_HEADER:
            raise StationError(f"{path}: header must be {','.join(STATION_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise StationError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            sid, lat, lon, ts, ghi = (c.strip() for c in row)
            try:
                latf, lonf = float(lat), float(lon)
                t = to_epoch(ts)
                g = float(ghi) if ghi else math.nan
            except ValueError as exc:
                raise StationError(f"{path}:{lineno}: {exc}") from None
            if sid in coords and coords[sid] != (latf, lonf):
                raise StationError(f"{path}:{lineno}: station {sid} changes coordinates")
            coords[sid] = (latf, lonf)
            rows.setdefault(sid, []).append((t, g))
    out = []
    for sid, obs in rows.items():
        obs.sort(key=lambda r: r[0])
        times = [t for t, _ in obs]
        if len(set(times)) != len(times):
            raise StationError(f"{path}: station {sid} has duplicate timestamps")
        out.append(StationRecord(sid, *coords[sid], times, [g for _, g in obs]))
    return out


def write_stations(path, stations) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATION_HEADER)
        for st in stations:
            for t, g in zip(st.times, st.ghi):
                w.writerow([st.station_id, repr(float(st.lat)), repr(float(st.lon)), isoformat(int(t)),
                            "" if not np.isfinite(g) else repr(float(g))])


def sample_stack(stack: FieldStack, lat: float, lon: float, sampler: str = "bilinear") -> np.ndarray:
    """Time series of a (T, H, W) stack at one location."""
    if sampler == "bilinear":
        vals, _ = bilinear_sample(stack.values, stack.grid, np.array(lat), np.array(lon))
        return np.asarray(vals, dtype=np.float64)
    if sampler == "nearest":
        fi, fj = cell_index(stack.grid, lat, lon)
        i = int(np.clip(np.floor(fi + 0.5), 0, stack.grid.n_lat - 1))
        j = int(np.clip(np.floor(fj + 0.5), 0, stack.grid.n_lon - 1))
        return stack.values[:, i, j].astype(np.float64)
    raise StationError(f"unknown sampler {sampler!r}; choose from {SAMPLERS}")


def inside(grid: GridSpec, lat: float, lon: float) -> bool:
    return grid.lat_min <= lat <= grid.lat_max and grid.lon_min <= lon <= grid.lon_max


@dataclass
class StationScore:
    station_id: str
    lat: float
    lon: float
    n: int
    mae: float
    rmse: float
    n_diff: int
    diff_mae: float
    diff_rmse: float
    base_mae: float = math.nan
    base_rmse: float = math.nan

    @property
    def beats_baseline(self) -> bool:
        return math.isfinite(self.base_rmse) and self.rmse < self.base_rmse


@dataclass
class StationReport:
    scores: list[StationScore]
    skipped: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        if not self.scores:
            return {"n_stations": 0, "n_skipped": len(self.skipped)}
        mae = np.array([s.mae for s in self.scores])
        rmse = np.array([s.rmse for s in self.scores])
        out = {"n_stations": len(self.scores), "n_skipped": len(self.skipped),
               "median_mae": float(np.median(mae)), "mean_mae": float(np.mean(mae)),
               "median_rmse": float(np.median(rmse)), "mean_rmse": float(np.mean(rmse))}
        with_base = [s for s in self.scores if math.isfinite(s.base_rmse)]
        if with_base:
            out["fraction_beating_baseline"] = sum(s.beats_baseline for s in with_base) / len(with_base)
        return out


def _pool(pairs):
    """(n, mae, rmse) over a list of (obs, pred) arrays, ignoring NaN entries."""
    errs = [p[np.isfinite(o) & np.isfinite(p)] - o[np.isfinite(o) & np.isfinite(p)] for o, p in pairs]
    e = np.concatenate(errs) if errs else np.zeros(0)
    if e.size == 0:
        return 0, math.nan, math.nan
    return int(e.size), float(np.mean(np.abs(e))), float(np.sqrt(np.mean(e * e)))


def station_verify(forecasts, stations, baseline=None, sampler: str = "bilinear",
                   daytime=None) -> StationReport:
    """Per-station MAE/RMSE and Diff metrics pooled over every forecast stack.

    ``forecasts`` and optional ``baseline`` are sequences of irradiance
    FieldStacks (one per initialization). ``daytime`` optionally gives a
    matching sequence of (T, H, W) boolean stacks; hours where the station's
    nearest cell is dark are then dropped.
    """
    forecasts = [forecasts] if isinstance(forecasts, FieldStack) else list(forecasts)
    if baseline is not None:
        baseline = [baseline] if isinstance(baseline, FieldStack) else list(baseline)
        if len(baseline) != len(forecasts):
            raise MetricError("baseline and forecast sequences differ in length")
    if not forecasts:
        raise MetricError("no forecasts to verify")
    grid = forecasts[0].grid
    scores, skipped = [], []
    for st in stations:
        if not inside(grid, st.lat, st.lon):
            skipped.append(st.station_id)
            continue
        pairs, dpairs, bpairs = [], [], []
        for k, fc in enumerate(forecasts):
            obs = st.lookup(fc.times)
            if daytime is not None:
                day = sample_stack(FieldStack(fc.grid, fc.times, np.asarray(daytime[k], np.float32)),
                                   st.lat, st.lon, "nearest") > 0.5
                obs = np.where(day, obs, np.nan)
            pred = sample_stack(fc, st.lat, st.lon, sampler)
            pairs.append((obs, pred))
            dpairs.append((np.diff(obs), np.diff(pred)))
            if baseline is not None:
                bpairs.append((obs, sample_stack(baseline[k], st.lat, st.lon, sampler)))
        n, mae, rmse = _pool(pairs)
        if n == 0:
            skipped.append(st.station_id)
            continue
        nd, dmae, drmse = _pool(dpairs)
        _, bmae, brmse = _pool(bpairs) if bpairs else (0, math.nan, math.nan)
        scores.append(StationScore(st.station_id, st.lat, st.lon, n, mae, rmse, nd, dmae, drmse,
                                   bmae, brmse))
    return StationReport(scores, skipped)


def write_station_report(path, report: StationReport) -> None:
    cols = ("station_id", "lat", "lon", "n", "mae", "rmse", "n_diff", "diff_mae", "diff_rmse",
            "base_mae", "base_rmse")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for s in report.scores:
            w.writerow([getattr(s, c) if isinstance(getattr(s, c), (str, int)) else repr(float(getattr(s, c)))
                        for c in cols])
        for sid in report.skipped:
            w.writerow([sid] + ["skipped"] + [""] * (len(cols) - 2))
