"""Two-stage cloud/irradiance forecasting network."""

from .config import ModelConfig, ConfigError
from .layers import (PatchEmbed, PatchRecover, SpectralMix, AFNOLayer, WindowAttention,
                     SwinLayer, window_partition, window_merge, padded_extent)
from .network import (SolarSeer, CloudBlock, IrradianceBlock, param_count, param_breakdown,
                      solarseer_forward, run_model)
from .checkpoint import Checkpoint, CheckpointError

__all__ = [
    "ModelConfig", "ConfigError", "PatchEmbed", "PatchRecover", "SpectralMix", "AFNOLayer",
    "WindowAttention", "SwinLayer", "window_partition", "window_merge", "padded_extent",
    "SolarSeer", "CloudBlock", "IrradianceBlock", "param_count", "param_breakdown",
    "solarseer_forward", "run_model", "Checkpoint", "CheckpointError",
]
