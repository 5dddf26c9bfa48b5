"""Deterministic renderings of metric curves and gridded maps."""

from __future__ import annotations

import csv
import os

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SERIES_COLUMNS = ("mae", "rmse", "base_mae", "base_rmse", "diff_mae", "diff_rmse")


def _save(fig, out) -> None:
    ext = os.path.splitext(out)[1].lower()
    if ext == ".svg":
        with matplotlib.rc_context({"svg.hashsalt": "helioseer", "svg.fonttype": "path"}):
            fig.savefig(out, format="svg", metadata={"Date": None})
    elif ext == ".png":
        fig.savefig(out, format="png", dpi=100, metadata={"Software": None})
    else:
        plt.close(fig)
        raise ValueError(f"unsupported plot format {ext!r}; use .svg or .png")
    plt.close(fig)


def read_metrics_csv(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Lead times and numeric series from a metrics.csv (non-numeric leads skipped)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "lead" not in rows[0]:
        raise ValueError(f"{path}: expected a metrics table with a 'lead' column")
    rows = [r for r in rows if r["lead"].strip().isdigit()]
    if not rows:
        raise ValueError(f"{path}: no per-lead rows")
    leads = np.array([int(r["lead"]) for r in rows])
    series = {}
    for col in SERIES_COLUMNS:
        if col in rows[0]:
            vals = np.array([float(r[col]) if r[col] else np.nan for r in rows])
            if np.isfinite(vals).any():
                series[col] = vals
    if not series:
        raise ValueError(f"{path}: no metric series to plot")
    return leads, series


def plot_metrics(path, out, title: str | None = None) -> list[str]:
    leads, series = read_metrics_csv(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, vals in series.items():
        ax.plot(leads, vals, marker="o", markersize=3, label=name)
    ax.set_xlabel("lead time (h)")
    ax.set_ylabel("error")
    ax.set_title(title or os.path.basename(path))
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, out)
    return list(series)


def plot_map(values: np.ndarray, grid, out, title: str = "", units: str = "",
             mask: np.ndarray | None = None) -> None:
    v = np.ma.MaskedArray(np.asarray(values, dtype=np.float64),
                          mask=None if mask is None else np.asarray(mask, bool))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    extent = (grid.lon_min - grid.res / 2, grid.lon_max + grid.res / 2,
              grid.lat_min - grid.res / 2, grid.lat_max + grid.res / 2)
    im = ax.imshow(v, origin="lower", extent=extent, cmap="viridis", aspect="auto",
                   interpolation="nearest")
    cb = fig.colorbar(im, ax=ax)
    if units:
        cb.set_label(units)
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    finite = v.compressed()
    finite = finite[np.isfinite(finite)]
    bounds = f"min {finite.min():.4g}  max {finite.max():.4g}" if finite.size else "no valid cells"
    ax.set_title(f"{title}\n{bounds}" if title else bounds)
    _save(fig, out)
