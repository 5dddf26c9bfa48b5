"""A small reverse-mode autodiff engine over numpy arrays.

Each :class:`Tensor` records the op that produced it and a closure that maps
the output gradient to input gradients. :meth:`Tensor.backward` walks the
graph in reverse topological order; the order is fixed by construction so
repeated runs accumulate in the same sequence.

Complex values appear only around the FFT and are carried as explicit
(real, imag) pairs of real tensors, so every backward rule is real-valued.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import fft as _fft

_state = {"dtype": np.float32, "grad": True}


def default_dtype():
    return _state["dtype"]


def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError("only float32 and float64 are supported")
    _state["dtype"] = dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default dtype (``np.float64`` for gradient checks)."""
    old = _state["dtype"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = old


@contextlib.contextmanager
def no_grad():
    """Skip graph construction; used for inference."""
    old = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = old


def grad_enabled() -> bool:
    return _state["grad"]


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        dtype = dtype or _state["dtype"]
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.op = "leaf"
        self.name = name

    # -- basic properties
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op})"

    def zero_grad(self):
        self.grad = None

    # -- graph
    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operators
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def _topo_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    order.reverse()
    return order


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _make(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    needs = _state["grad"] and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    out._parents = tuple(parents) if needs else ()
    out._backward = backward if needs else None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# --- elementwise arithmetic ------------------------------------------------

def _pair(a, b):
    """Coerce constants to the dtype of the tensor operand."""
    if not isinstance(a, Tensor):
        b = as_tensor(b)
        return Tensor(a, dtype=b.dtype), b
    if not isinstance(b, Tensor):
        return a, Tensor(b, dtype=a.dtype)
    return a, b


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "div")

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data / b.data, (a, b), backward, "div")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes with broadcasting of the rest."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands with at least 2 dims")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, (a, b), backward, "matmul")


# --- shape manipulation ----------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def backward(g):
        return (g.reshape(x.shape),)

    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}") from None
    return _make(data, (x,), backward, "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(range(x.ndim))[::-1] if not axes else tuple(a % x.ndim for a in axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inv),)

    return _make(np.transpose(x.data, axes), (x,), backward, "transpose")


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ShapeError("concat of an empty list")
    axis = axis % xs[0].ndim
    for x in xs[1:]:
        if x.ndim != xs[0].ndim or any(s != t for k, (s, t) in enumerate(zip(x.shape, xs[0].shape))
                                        if k != axis):
            raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]}")
    bounds = np.cumsum([0] + [x.shape[axis] for x in xs])

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[k], bounds[k + 1]), axis=axis)
                     for k in range(len(xs)))

    return _make(np.concatenate([x.data for x in xs], axis=axis), xs, backward, "concat")


def _has_advanced(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray, Tensor)) for i in items)


def getitem(x: Tensor, idx) -> Tensor:
    advanced = _has_advanced(idx)

    def backward(g):
        out = np.zeros_like(x.data)
        if advanced:
            np.add.at(out, idx, g)
        else:
            out[idx] += g
        return (out,)

    return _make(x.data[idx], (x,), backward, "slice")


slice_ = getitem


def pad(x: Tensor, widths) -> Tensor:
    """Zero padding; ``widths`` is a sequence of (before, after) per axis."""
    widths = [tuple(w) for w in widths]
    if len(widths) != x.ndim:
        raise ShapeError("pad widths must cover every axis")
    if all(w == (0, 0) for w in widths):
        return x
    crop = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))

    def backward(g):
        return (g[crop],)

    return _make(np.pad(x.data, widths), (x,), backward, "pad")


def roll(x: Tensor, shift, axis) -> Tensor:
    def backward(g):
        neg = tuple(-s for s in shift) if isinstance(shift, (tuple, list)) else -shift
        return (np.roll(g, neg, axis=axis),)

    return _make(np.roll(x.data, shift, axis=axis), (x,), backward, "roll")


# --- reductions -------------------------------------------------------------

def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    if n == 0:
        raise ShapeError("mean over an empty axis")

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _make(np.asarray(x.data.mean(axis=axis, keepdims=keepdims)), (x,), backward, "mean")


# --- nonlinearities --------------------------------------------------------

def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _make(y, (x,), backward, "tanh")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)

    def backward(g):
        return (g * y,)

    return _make(y, (x,), backward, "exp")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; the gradient is zero where the clamp is active."""
    inside = (x.data >= lo) & (x.data <= hi)

    def backward(g):
        return (g * inside,)

    return _make(np.clip(x.data, lo, hi).astype(x.dtype), (x,), backward, "clip")


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0

    def backward(g):
        return (g * pos,)

    return _make(np.where(pos, x.data, 0).astype(x.dtype), (x,), backward, "relu")


GELU_C = math.sqrt(2.0 / math.pi)
GELU_K = 0.044715


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    v = x.data
    t = np.tanh(GELU_C * (v + GELU_K * v ** 3))
    y = 0.5 * v * (1.0 + t)

    def backward(g):
        dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * dt),)

    return _make(y, (x,), backward, "gelu")


def softplus(x: Tensor) -> Tensor:
    v = x.data
    y = np.log1p(np.exp(-np.abs(v))) + np.maximum(v, 0)

    def backward(g):
        return (g / (1.0 + np.exp(-v)),)

    return _make(y.astype(x.dtype), (x,), backward, "softplus")


def softshrink(x: Tensor, lam: float) -> Tensor:
    v = x.data
    keep = np.abs(v) > lam

    def backward(g):
        return (g * keep,)

    return _make((np.sign(v) * np.maximum(np.abs(v) - lam, 0)).astype(x.dtype), (x,), backward,
                 "softshrink")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.shape[axis] == 0:
        raise ShapeError("softmax over an empty axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make(s, (x,), backward, "softmax")


LN_EPS = 1e-5


def layer_norm(x: Tensor, axis: int = -1, eps: float = LN_EPS) -> Tensor:
    """Standardize along ``axis`` (no affine part; see nn.LayerNorm)."""
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        gm = g.mean(axis=axis, keepdims=True)
        gx = (g * xhat).mean(axis=axis, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return _make(xhat.astype(x.dtype), (x,), backward, "layer_norm")


# --- complex values and the FFT -------------------------------------------

@dataclass
class ComplexTensor:
    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ShapeError("real and imaginary parts must share a shape")

    @property
    def shape(self):
        return self.re.shape

    def numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data


def _complex_parts(x) -> tuple:
    if isinstance(x, ComplexTensor):
        return x.re, x.im
    return as_tensor(x), None


def _linear_complex(x, forward, adjoint, op: str) -> ComplexTensor:
    """Wrap a complex-linear map ``forward`` whose adjoint is ``adjoint``.

    For real loss L and y = A x, the gradient with respect to x (packed as
    dL/dRe + i dL/dIm) is A^H applied to dL/dRe(y) + i dL/dIm(y).
    """
    re, im = _complex_parts(x)
    z = re.data.astype(np.complex128) if im is None else re.data + 1j * im.data
    y = forward(z)
    dtype = re.data.dtype
    parents = (re,) if im is None else (re, im)

    def split(c):
        if im is None:
            return (c.real.astype(dtype),)
        return c.real.astype(dtype), c.imag.astype(dtype)

    def back_re(g):
        return split(adjoint(g.astype(np.complex128)))

    def back_im(g):
        return split(adjoint(1j * g))

    return ComplexTensor(_make(y.real.astype(dtype), parents, back_re, op + ".re"),
                         _make(y.imag.astype(dtype), parents, back_im, op + ".im"))


def fft2(x, axes=(-3, -2)) -> ComplexTensor:
    """Unnormalized 2-D DFT over ``axes`` (default: the token-grid axes of (..., H, W, D))."""
    re, _ = _complex_parts(x)
    n = re.shape[axes[0]] * re.shape[axes[1]]
    return _linear_complex(x, lambda z: _fft.fft2(z, axes), lambda g: _fft.ifft2(g, axes) * n, "fft2")


def ifft2(x, axes=(-3, -2)) -> ComplexTensor:
    """Inverse 2-D DFT with 1/(H W) normalization."""
    re, _ = _complex_parts(x)
    n = re.shape[axes[0]] * re.shape[axes[1]]
    return _linear_complex(x, lambda z: _fft.ifft2(z, axes), lambda g: _fft.fft2(g, axes) / n, "ifft2")
