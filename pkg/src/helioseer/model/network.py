"""The two-stage forecaster: cloud block (AFNO) followed by irradiance block (Swin)."""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..geogrid import FieldStack, UNITS_PERCENT, UNITS_WM2, HOUR
from ..tensor import Tensor
from ..tensor.nn import Module
from .config import ModelConfig, ConfigError
from .layers import PatchEmbed, PatchRecover, AFNOLayer, SwinLayer


# keeps float32 results strictly inside (0, 100) where tanh rounds to +-1
CLOUD_MARGIN = 1e-4


def cloud_to_percent(u: Tensor) -> Tensor:
    return T.clip(50.0 * (1.0 + T.tanh(u)), CLOUD_MARGIN, 100.0 - CLOUD_MARGIN)


class CloudBlock(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        D = cfg.cloud_embed_dim
        self.embed = PatchEmbed(cfg.in_channels, cfg.cloud_patch, D, rng)
        self.layers = [AFNOLayer(D, cfg.afno_blocks, cfg.afno_sparsity, cfg.afno_hidden_factor,
                                 cfg.mlp_ratio, rng) for _ in range(cfg.n_afno_layers)]
        self.recover = PatchRecover(D, cfg.cloud_patch, cfg.horizon_hours, rng)

    def forward(self, x: Tensor) -> Tensor:
        """Normalized (B, C_in, H, W) history -> cloud cover percent (B, horizon, H, W)."""
        H, W = x.shape[-2:]
        z = self.embed(x)
        for layer in self.layers:
            z = layer(z)
        return cloud_to_percent(self.recover(z, H, W))


class IrradianceBlock(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        D = cfg.irr_embed_dim
        self.scale = cfg.irr_scale
        self.beta = cfg.rectifier_beta
        self.gate = cfg.clearsky_gate
        self.embed = PatchEmbed(2 * cfg.horizon_hours, cfg.irr_patch, D, rng)
        self.layers = [SwinLayer(D, cfg.window, cfg.n_heads, 0 if k % 2 == 0 else cfg.window // 2,
                                 cfg.mlp_ratio, rng) for k in range(cfg.n_swin_layers)]
        self.recover = PatchRecover(D, cfg.irr_patch, cfg.horizon_hours, rng)

    def forward(self, cloud_pct: Tensor, clearsky: Tensor) -> Tensor:
        """Cloud percent and clear-sky W/m2, both (B, horizon, H, W) -> GHI W/m2."""
        if cloud_pct.shape != clearsky.shape:
            raise T.ShapeError(f"cloud stack {cloud_pct.shape} != clear-sky stack {clearsky.shape}")
        H, W = cloud_pct.shape[-2:]
        x = T.concat([cloud_pct * (1.0 / 50.0) - 1.0, clearsky * (1.0 / self.scale)], axis=1)
        z = self.embed(x)
        for layer in self.layers:
            z = layer(z)
        u = self.recover(z, H, W)
        if self.gate:
            return clearsky * T.softplus(u)
        return T.softplus(u * self.beta) * (self.scale / self.beta)


class SolarSeer(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.cloud = CloudBlock(cfg, rng)
        self.irradiance = IrradianceBlock(cfg, rng)

    def forward(self, sat: Tensor, clearsky: Tensor):
        """Returns (cloud percent, irradiance W/m2), each (B, horizon, H, W)."""
        cloud = self.cloud(sat)
        return cloud, self.irradiance(cloud, clearsky)


# --- parameter inventory -------------------------------------------------

def _affine(d_in, d_out):
    return d_in * d_out + d_out


def param_breakdown(cfg: ModelConfig) -> dict[str, int]:
    Dc, Di, K = cfg.cloud_embed_dim, cfg.irr_embed_dim, cfg.horizon_hours
    b = Dc // cfg.afno_blocks
    h = b * cfg.afno_hidden_factor
    mlp_c = _affine(Dc, cfg.mlp_ratio * Dc) + _affine(cfg.mlp_ratio * Dc, Dc)
    mlp_i = _affine(Di, cfg.mlp_ratio * Di) + _affine(cfg.mlp_ratio * Di, Di)
    spectral = cfg.afno_blocks * (4 * b * h + 2 * h + 2 * b)
    attn = _affine(Di, 3 * Di) + _affine(Di, Di) + (2 * cfg.window - 1) ** 2 * cfg.n_heads
    Pc, Pi = cfg.cloud_patch, cfg.irr_patch
    return {
        "cloud.embed": _affine(Pc * Pc * cfg.in_channels, Dc),
        "cloud.layers": cfg.n_afno_layers * (4 * Dc + spectral + mlp_c),
        "cloud.recover": _affine(Dc, Pc * Pc * K),
        "irradiance.embed": _affine(Pi * Pi * 2 * K, Di),
        "irradiance.layers": cfg.n_swin_layers * (4 * Di + attn + mlp_i),
        "irradiance.recover": _affine(Di, Pi * Pi * K),
    }


def param_count(cfg: ModelConfig) -> int:
    """Total number of scalar parameters implied by ``cfg`` (closed form)."""
    return sum(param_breakdown(cfg).values())


# --- stack-level forward ---------------------------------------------------

def _as_batch(x: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == 4 and x.shape[:2] == (cfg.input_hours, cfg.input_channels):
        x = x.reshape((cfg.in_channels,) + x.shape[2:])
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ConfigError(f"satellite input of shape {x.shape} does not provide "
                          f"{cfg.input_hours}x{cfg.input_channels} channels")
    return x


def run_model(model: SolarSeer, sat_norm: np.ndarray, clearsky: np.ndarray):
    """Inference on numpy arrays without building a gradient graph."""
    cfg = model.cfg
    sat = _as_batch(sat_norm, cfg)
    cs = np.asarray(clearsky, dtype=np.float32)
    if cs.ndim == 3:
        cs = cs[None]
    if cs.shape[1] != cfg.horizon_hours or cs.shape[-2:] != sat.shape[-2:]:
        raise ConfigError(f"clear-sky stack {cs.shape} does not match horizon/grid")
    with T.no_grad():
        cloud, irr = model(Tensor(sat), Tensor(cs))
    return cloud.data, irr.data


def solarseer_forward(sat_history, clearsky_fc: FieldStack, cfg: ModelConfig, checkpoint):
    """Cloud and irradiance forecast stacks for hours t0+1 ... t0+horizon.

    ``sat_history`` holds the normalized satellite history, (hours, bands, H, W)
    or flattened (hours*bands, H, W), as an array or FieldStack.
    """
    if checkpoint.config != cfg:
        raise ConfigError("checkpoint configuration does not match the requested config")
    values = sat_history.values if isinstance(sat_history, FieldStack) else sat_history
    model = checkpoint.build_model()
    cloud, irr = run_model(model, values, clearsky_fc.values)
    times = clearsky_fc.times
    if len(times) > 1 and not np.all(np.diff(times) == HOUR):
        raise ConfigError("clear-sky stack must be hourly")
    return (FieldStack(clearsky_fc.grid, times, cloud[0], UNITS_PERCENT),
            FieldStack(clearsky_fc.grid, times, irr[0], UNITS_WM2))
