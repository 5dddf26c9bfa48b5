"""Forecast production from a trained checkpoint, plus the reference baselines."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..clearsky import DEFAULT_TL, clearsky_stack
from ..geogrid import HOUR, UNITS_PERCENT, UNITS_WM2, FieldStack, isoformat, to_epoch
from ..model import Checkpoint, run_model
from .norm import NormStats, apply_norm


class ForecastError(ValueError):
    pass


@dataclass
class ForecastSet:
    t0: int
    cloud: FieldStack        # percent, t0+1 ... t0+horizon
    irradiance: FieldStack   # W/m2
    clearsky: FieldStack
    inference_seconds: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.irradiance.times


def _check_history(sat_history: FieldStack, t0: int, hours: int, channels: int) -> None:
    v = sat_history.values
    if v.ndim != 4 or v.shape[1] != channels:
        raise ForecastError(f"satellite history must be (hours, {channels}, H, W), got {v.shape}")
    want = t0 - HOUR * np.arange(hours - 1, -1, -1, dtype=np.int64)
    have = sat_history.times
    if len(have) != hours or not np.array_equal(have, want):
        missing = sorted(set(want.tolist()) - set(have.tolist()))
        detail = f"missing {', '.join(isoformat(t) for t in missing)}" if missing else \
            f"expected {isoformat(want[0])} ... {isoformat(want[-1])}"
        raise ForecastError(f"satellite history gap: {detail}")


def _check_grid(ck: Checkpoint, grid) -> None:
    shape = ck.metadata.get("grid_shape")
    if shape is not None and shape != f"{grid.n_lat}x{grid.n_lon}":
        raise ForecastError(f"grid mismatch: checkpoint trained on {shape}, input is "
                            f"{grid.n_lat}x{grid.n_lon}")
    res = ck.metadata.get("grid_res")
    if res is not None and abs(float(res) - grid.res) > 1e-9:
        raise ForecastError(f"grid mismatch: checkpoint resolution {res}, input {grid.res}")


def forecast(checkpoint: Checkpoint, sat_history: FieldStack, t0, elevation=0.0,
             turbidity=DEFAULT_TL, model=None, check_grid: bool = True) -> ForecastSet:
    """Cloud and irradiance forecasts for t0+1h ... t0+horizon from raw satellite history."""
    cfg = checkpoint.config
    t0 = to_epoch(t0)
    _check_history(sat_history, t0, cfg.input_hours, cfg.input_channels)
    grid = sat_history.grid
    if check_grid:
        _check_grid(checkpoint, grid)
    stats = NormStats.from_metadata(checkpoint.metadata)
    cs = clearsky_stack(grid, t0, cfg.horizon_hours, elevation=elevation, turbidity=turbidity)
    model = model if model is not None else checkpoint.build_model()
    sat = apply_norm(stats, sat_history.values)
    start = time.perf_counter()
    cloud, irr = run_model(model, sat, cs.values)
    elapsed = time.perf_counter() - start
    return ForecastSet(t0, FieldStack(grid, cs.times, cloud[0], UNITS_PERCENT),
                       FieldStack(grid, cs.times, irr[0], UNITS_WM2), cs, elapsed)


# --- baselines ---------------------------------------------------------------

def clearsky_baseline(clearsky_fc: FieldStack) -> FieldStack:
    """Irradiance forecast that ignores clouds."""
    return FieldStack(clearsky_fc.grid, clearsky_fc.times, clearsky_fc.values.copy(), UNITS_WM2)


def persistence_baseline(cloud_t0: np.ndarray, clearsky_fc: FieldStack, alpha: float) -> FieldStack:
    """Cloud cover frozen at t0, scaled through the clear-sky attenuation law."""
    c = np.asarray(cloud_t0, dtype=np.float64)
    if c.shape != clearsky_fc.grid.shape:
        raise ForecastError(f"cloud field {c.shape} does not match grid {clearsky_fc.grid.shape}")
    irr = clearsky_fc.values.astype(np.float64) * (1.0 - alpha * c / 100.0)[None]
    return FieldStack(clearsky_fc.grid, clearsky_fc.times, irr.astype(np.float32), UNITS_WM2)
