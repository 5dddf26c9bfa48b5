"""Parameter containers on top of the autodiff core."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import core
from .core import Tensor

TRUNC_STD = 0.02


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def trunc_normal(rng: np.random.Generator, shape, std: float = TRUNC_STD) -> np.ndarray:
    """Normal(0, std) truncated to two standard deviations by resampling."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


class Module:
    """Minimal module: parameters are Tensor attributes, submodules are Module
    attributes or lists of Modules. Names follow attribute paths (``a.b.0.w``)."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield path, val
            elif isinstance(val, Module):
                yield from val.named_parameters(path + ".")
            elif isinstance(val, (list, tuple)):
                for k, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{k}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.data.copy()) for n, p in self.named_parameters())

    def load_state_dict(self, state) -> None:
        params = OrderedDict(self.named_parameters())
        missing = [n for n in params if n not in state]
        extra = [n for n in state if n not in params]
        if missing or extra:
            raise KeyError(f"state mismatch; missing={missing[:5]} unexpected={extra[:5]}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != expected {p.shape}")
            p.data = arr.astype(p.dtype)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, zero: bool = False):
        w = np.zeros((d_in, d_out)) if zero else trunc_normal(rng, (d_in, d_out))
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(d_out))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim == 2:
            return x @ self.weight + self.bias
        lead = x.shape[:-1]
        y = x.reshape(-1, x.shape[-1]) @ self.weight + self.bias
        return y.reshape(lead + (self.weight.shape[1],))


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.weight = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))
        self.enabled = True

    def forward(self, x: Tensor) -> Tensor:
        if not self.enabled:
            return x
        return core.layer_norm(x, axis=-1) * self.weight + self.bias


class MLP(Module):
    """affine -> GELU -> affine."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(core.gelu(self.fc1(x)))
