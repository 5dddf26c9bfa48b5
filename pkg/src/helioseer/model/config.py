from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from ..kvconfig import format_kv, parse_value


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    input_hours: int = 6
    input_channels: int = 4
    horizon_hours: int = 24
    # cloud block
    n_afno_layers: int = 4
    cloud_patch: int = 4
    cloud_embed_dim: int = 600
    afno_blocks: int = 8
    afno_sparsity: float = 0.01
    afno_hidden_factor: int = 1
    # irradiance block
    n_swin_layers: int = 8
    irr_patch: int = 8
    window: int = 16
    irr_embed_dim: int = 256
    n_heads: int = 2
    mlp_ratio: int = 4
    # W/m2 per unit of normalized irradiance (clear-sky inputs and rectified outputs)
    irr_scale: float = 1000.0
    # output rectifier: irr = irr_scale * softplus(beta * u) / beta
    rectifier_beta: float = 20.0
    # predict a clear-sky index instead: irr = clearsky * softplus(u); zero whenever the sun is down
    clearsky_gate: bool = True
    seed: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def in_channels(self) -> int:
        return self.input_hours * self.input_channels

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("afno_sparsity", "seed", "n_afno_layers", "n_swin_layers", "clearsky_gate"):
                continue
            if v <= 0:
                raise ConfigError(f"{f.name} must be positive, got {v}")
        if self.afno_sparsity < 0:
            raise ConfigError("afno_sparsity must be >= 0")
        if self.n_afno_layers < 0 or self.n_swin_layers < 0:
            raise ConfigError("layer counts must be >= 0")
        if self.cloud_embed_dim % self.afno_blocks:
            raise ConfigError(f"cloud_embed_dim={self.cloud_embed_dim} not divisible by "
                              f"afno_blocks={self.afno_blocks}")
        if self.irr_embed_dim % self.n_heads:
            raise ConfigError(f"irr_embed_dim={self.irr_embed_dim} not divisible by "
                              f"n_heads={self.n_heads}")

    @classmethod
    def paper(cls) -> "ModelConfig":
        return cls()

    @classmethod
    def toy(cls) -> "ModelConfig":
        return cls(n_afno_layers=2, cloud_patch=4, cloud_embed_dim=64, afno_blocks=4,
                   n_swin_layers=2, irr_patch=4, window=4, irr_embed_dim=48, n_heads=2)

    def replace(self, **kw) -> "ModelConfig":
        return dataclasses.replace(self, **kw)

    def to_kv(self) -> str:
        return format_kv({f.name: getattr(self, f.name) for f in fields(self)})

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k not in known:
                raise ConfigError(f"unknown model config key {k!r}")
            kw[k] = parse_value(v, known[k].type)
        return cls(**kw)
