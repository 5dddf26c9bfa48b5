"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import Tensor, precision


class NonFiniteError(FloatingPointError):
    pass


def _scalarize(out: Tensor, weights: np.ndarray | None) -> Tensor:
    if out.size == 1:
        return out.sum()
    return (out * Tensor(weights, dtype=out.dtype)).sum()


def grad_check(fn: Callable[..., Tensor], inputs: Sequence, eps: float = 1e-4,
               max_coords: int | None = None, seed: int = 0) -> float:
    """Worst relative error between reverse-mode and central-difference gradients.

    ``fn`` maps the input tensors to an output tensor; non-scalar outputs are
    contracted with fixed random weights. Runs in float64. With ``max_coords``
    only that many randomly chosen coordinates per input are probed. The
    relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
    """
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        xs = [Tensor(np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64),
                     requires_grad=True) for x in inputs]
        out = fn(*xs)
        if not np.all(np.isfinite(out.data)):
            raise NonFiniteError("non-finite output in gradient check")
        weights = None if out.size == 1 else rng.normal(size=out.shape)
        _scalarize(out, weights).backward()
        analytic = [np.zeros_like(x.data) if x.grad is None else x.grad for x in xs]

        def f(arrays):
            val = _scalarize(fn(*[Tensor(a, dtype=np.float64) for a in arrays]), weights).item()
            if not np.isfinite(val):
                raise NonFiniteError("non-finite value during finite differences")
            return val

        base = [x.data.copy() for x in xs]
        worst = 0.0
        for k, x in enumerate(base):
            coords = np.arange(x.size)
            if max_coords is not None and x.size > max_coords:
                coords = np.sort(rng.choice(x.size, size=max_coords, replace=False))
            for c in coords:
                idx = np.unravel_index(c, x.shape)
                plus = [b.copy() for b in base]
                minus = [b.copy() for b in base]
                plus[k][idx] += eps
                minus[k][idx] -= eps
                numeric = (f(plus) - f(minus)) / (2 * eps)
                a = analytic[k][idx]
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst


def module_grad_check(module, fn: Callable[[], Tensor], eps: float = 1e-4,
                      max_coords: int | None = None, seed: int = 0) -> float:
    """Gradient check over a module's parameters. ``fn()`` must rebuild the
    output from the module's current parameter values (which must be float64)."""
    rng = np.random.default_rng(seed)
    params = module.parameters()
    module.zero_grad()
    out = fn()
    weights = None if out.size == 1 else rng.normal(size=out.shape)
    _scalarize(out, weights).backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, g in zip(params, analytic):
        coords = np.arange(p.size)
        if max_coords is not None and p.size > max_coords:
            coords = np.sort(rng.choice(p.size, size=max_coords, replace=False))
        for c in coords:
            idx = np.unravel_index(c, p.shape)
            old = p.data[idx]
            p.data[idx] = old + eps
            fp = _scalarize(fn(), weights).item()
            p.data[idx] = old - eps
            fm = _scalarize(fn(), weights).item()
            p.data[idx] = old
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteError("non-finite value during finite differences")
            numeric = (fp - fm) / (2 * eps)
            err = abs(g[idx] - numeric) / max(abs(g[idx]), abs(numeric), 1e-8)
            worst = max(worst, err)
    module.zero_grad()
    return worst
