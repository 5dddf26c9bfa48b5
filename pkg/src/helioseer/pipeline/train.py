"""Joint two-stage training with Adam and global-norm gradient clipping.

The cloud block is supervised on its intermediate cloud-cover stack and the
irradiance block on the final output, in one loop:

    loss = lambda_cloud * MSE(cloud) / 100**2 + lambda_irr * MSE(irr) / scale**2
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import time
from dataclasses import dataclass, fields

import numpy as np

from .. import tensor as T
from ..kvconfig import format_kv, parse_value, read_kv
from ..model import Checkpoint, ModelConfig, SolarSeer
from .norm import NormStats, apply_norm, fit_norm


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    steps: int = 1500
    batch_size: int = 2
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_cloud: float = 1.0
    lambda_irr: float = 1.0
    clip_norm: float = 1.0
    seed: int = 0
    val_fraction: float = 0.2
    lr_schedule: str = "cosine"   # "cosine" decays to 0 over the run; "constant" keeps lr
    warmup_steps: int = 50

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, parse_value(getattr(self, f.name), f.type))
        if self.steps <= 0 or self.batch_size <= 0 or not self.lr > 0:
            raise ValueError("steps, batch_size and lr must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.lambda_cloud < 0 or self.lambda_irr < 0:
            raise ValueError("loss weights must be >= 0")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_kv(self) -> str:
        return format_kv(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValueError(f"unknown train config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_dict(read_kv(path))

    def learning_rate(self, step: int) -> float:
        lr = self.lr
        if self.warmup_steps and step < self.warmup_steps:
            lr *= (step + 1) / self.warmup_steps
        if self.lr_schedule == "cosine":
            lr *= 0.5 * (1.0 + math.cos(math.pi * step / self.steps))
        return lr


# --- sample windows ---------------------------------------------------------

def split_days(n_days: int, val_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Whole-day split: the trailing block of days is held out for validation."""
    n_val = int(round(val_fraction * n_days)) if val_fraction > 0 else 0
    n_val = min(n_val, n_days - 1)
    days = np.arange(n_days)
    return days[:n_days - n_val], days[n_days - n_val:]


def sample_starts(day_index: np.ndarray, days, input_hours: int, horizon: int) -> np.ndarray:
    """Indices t0 whose whole window t0-input_hours+1 ... t0+horizon lies on ``days``."""
    ok = np.isin(day_index, np.asarray(days))
    n = len(day_index)
    starts = []
    for t0 in range(input_hours - 1, n - horizon):
        if ok[t0 - input_hours + 1:t0 + horizon + 1].all():
            starts.append(t0)
    return np.asarray(starts, dtype=np.int64)


class Windows:
    """Assembles (normalized satellite history, clear-sky, cloud, irradiance) batches."""

    def __init__(self, dataset, stats: NormStats, cfg: ModelConfig):
        self.ds = dataset
        self.cfg = cfg
        self.sat = apply_norm(stats, dataset.satellite)

    def batch(self, starts) -> tuple[np.ndarray, ...]:
        P, K = self.cfg.input_hours, self.cfg.horizon_hours
        H, W = self.ds.cloud.shape[-2:]
        sat = np.stack([self.sat[t0 - P + 1:t0 + 1].reshape(-1, H, W) for t0 in starts])
        cs = np.stack([self.ds.clearsky[t0 + 1:t0 + K + 1] for t0 in starts])
        cloud = np.stack([self.ds.cloud[t0 + 1:t0 + K + 1] for t0 in starts])
        irr = np.stack([self.ds.irradiance[t0 + 1:t0 + K + 1] for t0 in starts])
        return sat, cs, cloud, irr


# --- optimizer ------------------------------------------------------------------

class Adam:
    def __init__(self, params, cfg: TrainConfig):
        self.params = list(params)
        self.cfg = cfg
        self.m = [np.zeros_like(p.data, dtype=np.float64) for p in self.params]
        self.v = [np.zeros_like(p.data, dtype=np.float64) for p in self.params]
        self.t = 0

    def step(self, lr: float) -> float:
        """Clip to the global norm, apply one Adam update; returns the pre-clip norm."""
        c = self.cfg
        grads = [np.zeros(p.shape) if p.grad is None else p.grad.astype(np.float64)
                 for p in self.params]
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if c.clip_norm > 0 and norm > c.clip_norm:
            grads = [g * (c.clip_norm / norm) for g in grads]
        self.t += 1
        b1t = 1.0 - c.beta1 ** self.t
        b2t = 1.0 - c.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            update = lr * (m / b1t) / (np.sqrt(v / b2t) + c.eps)
            p.data = (p.data - update).astype(p.dtype)
        return norm


def loss_terms(model: SolarSeer, batch, tcfg: TrainConfig):
    sat, cs, cloud_t, irr_t = batch
    cloud, irr = model(T.Tensor(sat), T.Tensor(cs))
    scale = model.cfg.irr_scale
    dc = cloud - T.Tensor(cloud_t)
    di = irr - T.Tensor(irr_t)
    lc = T.mean(dc * dc) * (1.0 / 100.0 ** 2)
    li = T.mean(di * di) * (1.0 / scale ** 2)
    return lc, li, lc * tcfg.lambda_cloud + li * tcfg.lambda_irr


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    losses: np.ndarray          # total loss per step
    cloud_losses: np.ndarray
    irr_losses: np.ndarray
    val_loss: float
    norm: NormStats
    train_days: np.ndarray
    val_days: np.ndarray
    seconds: float


def loss_digest(losses) -> str:
    return hashlib.sha256(np.asarray(losses, dtype="<f8").tobytes()).hexdigest()[:16]


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, dataset, starts=None,
          log=None) -> TrainResult:
    """Fit a fresh model on ``dataset``; ``starts`` overrides the training windows."""
    t_begin = time.perf_counter()
    day_idx = dataset.day_index()
    n_days = int(day_idx.max()) + 1
    train_days, val_days = split_days(n_days, train_cfg.val_fraction)
    P, K = model_cfg.input_hours, model_cfg.horizon_hours
    if starts is None:
        starts = sample_starts(day_idx, train_days, P, K)
    starts = np.asarray(starts, dtype=np.int64)
    if len(starts) == 0:
        raise TrainingError(f"dataset provides no full ({P}-hour input, {K}-hour target) "
                            "training sample")
    train_hours = np.isin(day_idx, train_days)
    stats = fit_norm(dataset.satellite[train_hours], model_cfg.irr_scale)
    windows = Windows(dataset, stats, model_cfg)

    model = SolarSeer(model_cfg)
    opt = Adam(model.parameters(), train_cfg)
    rng = np.random.default_rng(train_cfg.seed)
    losses, lcs, lis = [], [], []
    for step in range(train_cfg.steps):
        pick = rng.choice(len(starts), size=min(train_cfg.batch_size, len(starts)),
                          replace=len(starts) < train_cfg.batch_size)
        batch = windows.batch(starts[np.sort(pick)])
        model.zero_grad()
        lc, li, loss = loss_terms(model, batch, train_cfg)
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at step {step}")
        loss.backward()
        opt.step(train_cfg.learning_rate(step))
        losses.append(value)
        lcs.append(float(lc.data))
        lis.append(float(li.data))
        if log is not None and (step % 50 == 0 or step == train_cfg.steps - 1):
            log(f"step {step:5d}  loss {value:.6f}  cloud {lcs[-1]:.6f}  irr {lis[-1]:.6f}")

    val_loss = float("nan")
    val_starts = sample_starts(day_idx, val_days, P, K) if len(val_days) else np.zeros(0, int)
    if len(val_starts):
        vals = []
        with T.no_grad():
            for k in range(0, len(val_starts), 4):
                vals.append(float(loss_terms(model, windows.batch(val_starts[k:k + 4]),
                                             train_cfg)[2].data) * len(val_starts[k:k + 4]))
        val_loss = sum(vals) / len(val_starts)

    meta = dict(stats.to_metadata())
    meta.update({
        "steps": str(train_cfg.steps), "seed": str(train_cfg.seed),
        "final_loss": repr(losses[-1]), "val_loss": repr(val_loss),
        "loss_digest": loss_digest(losses),
        "grid_shape": f"{dataset.grid.n_lat}x{dataset.grid.n_lon}",
        "grid_res": repr(float(dataset.grid.res)),
        "alpha": repr(float(dataset.config.alpha)),
    })
    ck = Checkpoint.from_model(model, meta)
    return TrainResult(ck, np.asarray(losses), np.asarray(lcs), np.asarray(lis), val_loss,
                       stats, train_days, val_days, time.perf_counter() - t_begin)
