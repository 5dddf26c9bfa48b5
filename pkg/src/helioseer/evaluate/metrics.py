"""Point and gridded verification metrics.

MAE and RMSE pool every unmasked sample; multi-initialization maps pool
squared errors before taking the root rather than averaging per-run RMSEs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geogrid import Field, FieldStack


class MetricError(ValueError):
    pass


def _values(x) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, (Field, FieldStack)) else x, dtype=np.float64)


def _valid(truth, pred, mask) -> np.ndarray:
    """Boolean array of contributing entries. ``mask`` marks *valid* entries;
    masks carried by Field/FieldStack inputs mark *missing* ones."""
    y, p = _values(truth), _values(pred)
    if y.shape != p.shape:
        raise MetricError(f"truth shape {y.shape} != prediction shape {p.shape}")
    ok = np.isfinite(y) & np.isfinite(p)
    for x in (truth, pred):
        m = getattr(x, "mask", None)
        if m is not None:
            ok &= ~np.asarray(m, bool)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        ok &= np.broadcast_to(mask, y.shape)
    return ok


def mae_rmse(truth, pred, mask=None) -> tuple[float, float]:
    """(MAE, RMSE) over the entries where ``mask`` is True (all when None)."""
    ok = _valid(truth, pred, mask)
    n = int(ok.sum())
    if n == 0:
        raise MetricError("no contributing samples (empty mask)")
    e = (_values(pred) - _values(truth))[ok]
    return float(np.mean(np.abs(e))), float(np.sqrt(np.mean(e * e)))


def first_order_diff(x, axis: int = 0) -> np.ndarray:
    """``y[t] - y[t-1]`` along ``axis`` (time)."""
    v = _values(x)
    if v.shape[axis] < 2:
        raise MetricError(f"first-order difference needs >= 2 samples along time, got {v.shape[axis]}")
    return np.diff(v, axis=axis)


def diff_valid(mask, shape, axis: int = 0) -> np.ndarray:
    """A difference is valid only where both adjacent hours are."""
    if mask is None:
        return None
    m = np.broadcast_to(np.asarray(mask, bool), shape)
    m = np.moveaxis(m, axis, 0)
    return np.moveaxis(m[1:] & m[:-1], 0, axis)


def diff_metrics(truth, pred, mask=None, axis: int = 0) -> tuple[float, float]:
    y, p = _values(truth), _values(pred)
    if y.shape != p.shape:
        raise MetricError(f"truth shape {y.shape} != prediction shape {p.shape}")
    ok = _valid(truth, pred, mask)
    return mae_rmse(first_order_diff(y, axis), first_order_diff(p, axis), diff_valid(ok, y.shape, axis))


# --- maps ----------------------------------------------------------------------

def _stack_arrays(stacks) -> np.ndarray:
    if isinstance(stacks, (FieldStack, np.ndarray)):
        stacks = [stacks]
    arrs = [_values(s) for s in stacks]
    if not arrs:
        raise MetricError("no stacks to aggregate")
    shape = arrs[0].shape
    for a in arrs:
        if a.shape != shape:
            raise MetricError(f"stack alignment failure: {a.shape} vs {shape}")
    return np.stack(arrs)


def _check_alignment(truth_stacks, pred_stacks) -> None:
    ts = truth_stacks if isinstance(truth_stacks, (list, tuple)) else [truth_stacks]
    ps = pred_stacks if isinstance(pred_stacks, (list, tuple)) else [pred_stacks]
    if len(ts) != len(ps):
        raise MetricError(f"{len(ts)} truth stacks but {len(ps)} prediction stacks")
    for k, (t, p) in enumerate(zip(ts, ps)):
        if isinstance(t, FieldStack) and isinstance(p, FieldStack):
            if not t.grid.same_as(p.grid) or not np.array_equal(t.times, p.times):
                raise MetricError(f"stack pair {k} is not aligned in grid or time")


def spatial_error_map(truth_stacks, pred_stacks, mask=None, lead: int | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell (RMSE, MAE) pooled over initializations and lead times
    (or a single ``lead`` index). Cells with no samples are NaN."""
    _check_alignment(truth_stacks, pred_stacks)
    y, p = _stack_arrays(truth_stacks), _stack_arrays(pred_stacks)
    if y.shape != p.shape:
        raise MetricError(f"stack alignment failure: {y.shape} vs {p.shape}")
    if lead is not None:
        y, p = y[:, lead:lead + 1], p[:, lead:lead + 1]
        if mask is not None:
            mask = np.broadcast_to(np.asarray(mask, bool), _stack_arrays(truth_stacks).shape)[:, lead:lead + 1]
    ok = _valid(y, p, mask)
    e = np.where(ok, p - y, 0.0)
    axes = tuple(range(e.ndim - 2))
    n = ok.sum(axis=axes)
    with np.errstate(invalid="ignore", divide="ignore"):
        rmse = np.sqrt((e * e).sum(axis=axes) / n)
        mae = np.abs(e).sum(axis=axes) / n
    rmse[n == 0] = np.nan
    mae[n == 0] = np.nan
    return rmse, mae


def improvement_map(base_err, model_err) -> np.ma.MaskedArray:
    """``100 * (base - model) / base`` with cells where base == 0 masked."""
    b, m = _values(base_err), _values(model_err)
    if b.shape != m.shape:
        raise MetricError(f"base shape {b.shape} != model shape {m.shape}")
    bad = ~(np.isfinite(b) & np.isfinite(m)) | (b == 0)
    out = np.zeros_like(b)
    np.divide(100.0 * (b - m), b, out=out, where=~bad)
    return np.ma.MaskedArray(out, mask=bad)


def improvement(base: float, model: float) -> float:
    if base == 0:
        return float("nan")
    return 100.0 * (base - model) / base


@dataclass
class PearsonResult:
    r: np.ma.MaskedArray       # (H, W)
    n_samples: np.ndarray      # daytime samples per cell
    n_masked: int

    def fraction_above(self, threshold: float = 0.5) -> float:
        """Share of all cells whose r exceeds ``threshold`` (masked cells count as failures)."""
        return float(np.sum(self.r.filled(-np.inf) > threshold) / self.r.size)


def pearson_map(cloud_truth, clearsky, irr_truth, daytime_mask) -> PearsonResult:
    """Per-cell correlation between the uncertain component |clearsky - irradiance|
    and cloud cover over daytime hours (time is axis 0)."""
    c, cs, irr = _values(cloud_truth), _values(clearsky), _values(irr_truth)
    if not c.shape == cs.shape == irr.shape:
        raise MetricError(f"misaligned inputs {c.shape}, {cs.shape}, {irr.shape}")
    day = np.broadcast_to(np.asarray(daytime_mask, bool), c.shape)
    u = np.abs(cs - irr)
    n = day.sum(axis=0)
    w = day.astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = (w * u).sum(0) / n
        mc = (w * c).sum(0) / n
        du = np.where(day, u - mu, 0.0)
        dc = np.where(day, c - mc, 0.0)
        cov = (du * dc).sum(0)
        vu = (du * du).sum(0)
        vc = (dc * dc).sum(0)
        r = cov / np.sqrt(vu * vc)
    bad = (n < 3) | ~(vu > 0) | ~(vc > 0) | ~np.isfinite(r)
    r = np.clip(np.where(bad, 0.0, r), -1.0, 1.0)
    return PearsonResult(np.ma.MaskedArray(r, mask=bad), n, int(bad.sum()))


# --- per-lead report ----------------------------------------------------------

@dataclass
class MetricReport:
    """Per-lead and aggregate scores with the sample counts behind them."""
    leads: np.ndarray
    mae: np.ndarray
    rmse: np.ndarray
    count: np.ndarray
    total_mae: float
    total_rmse: float
    total_count: int
    diff_mae: float = float("nan")
    diff_rmse: float = float("nan")
    maps: dict = field(default_factory=dict)
    stations: list = field(default_factory=list)

    def check(self) -> None:
        tol = 1e-9
        for m, r in zip(list(self.mae) + [self.total_mae], list(self.rmse) + [self.total_rmse]):
            if np.isfinite(m) and not (0 <= m <= r * (1 + tol) + tol):
                raise MetricError(f"report violates 0 <= MAE <= RMSE ({m} vs {r})")


def lead_report(truth_stacks, pred_stacks, mask=None) -> MetricReport:
    """Scores per lead time (axis 1 of the pooled (N, K, H, W) array) and overall."""
    _check_alignment(truth_stacks, pred_stacks)
    y, p = _stack_arrays(truth_stacks), _stack_arrays(pred_stacks)
    if y.shape != p.shape:
        raise MetricError(f"stack alignment failure: {y.shape} vs {p.shape}")
    ok = _valid(y, p, mask)
    K = y.shape[1]
    mae = np.full(K, np.nan)
    rmse = np.full(K, np.nan)
    cnt = np.zeros(K, dtype=np.int64)
    for k in range(K):
        cnt[k] = int(ok[:, k].sum())
        if cnt[k]:
            mae[k], rmse[k] = mae_rmse(y[:, k], p[:, k], ok[:, k])
    total_mae, total_rmse = mae_rmse(y, p, ok)
    try:
        dm, dr = diff_metrics(y, p, ok, axis=1)
    except MetricError:
        dm = dr = float("nan")
    rep = MetricReport(np.arange(1, K + 1), mae, rmse, cnt, total_mae, total_rmse,
                       int(ok.sum()), dm, dr)
    rep.check()
    return rep
