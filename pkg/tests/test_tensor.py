import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helioseer import tensor as T
from helioseer.tensor import Tensor
from helioseer.tensor import fft as F
from helioseer.tensor.core import LN_EPS


def test_default_dtype_is_float32_and_precision_switch():
    assert Tensor([1.0, 2.0]).dtype == np.float32
    with T.precision(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert T.default_dtype() == np.float32


def test_gradient_buffer_shape_matches_value():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    (x * b).sum().backward()
    assert x.grad.shape == x.shape and b.grad.shape == b.shape
    assert np.all(b.grad == 2.0)


def test_shape_mismatch_raises():
    with pytest.raises(T.ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))
    with pytest.raises(T.ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    with pytest.raises(T.ShapeError):
        T.softmax(Tensor(np.ones((2, 0))), axis=-1)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 9), st.integers(0, 2**31 - 1))
def test_softmax_rows(n, m, seed):
    x = np.random.default_rng(seed).normal(scale=5, size=(n, m))
    s = T.softmax(Tensor(x), axis=-1).data
    assert np.all((s > 0) & (s <= 1))
    assert np.allclose(s.sum(axis=-1), 1.0, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(2, 12), st.integers(0, 2**31 - 1))
def test_layer_norm_rows(n, m, seed):
    x = np.random.default_rng(seed).normal(loc=3, scale=4, size=(n, m))
    y = T.layer_norm(Tensor(x), axis=-1).data.astype(np.float64)
    assert np.allclose(y.mean(axis=-1), 0.0, atol=1e-4)
    var = x.var(axis=-1)
    assert np.allclose(y.var(axis=-1), var / (var + LN_EPS), atol=1e-4)


def test_grad_check_examples(rng):
    # identity: exact up to the rounding of (x + eps) - (x - eps)
    assert T.grad_check(lambda x: x, [rng.normal(size=(3,))]) < 1e-10
    assert T.grad_check(lambda x: T.tanh(x), [np.array([0.3])]) < 1e-8
    err = T.grad_check(lambda a, b: a @ b, [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))])
    assert err < 1e-6


def test_grad_check_rejects_non_finite():
    with pytest.raises(T.NonFiniteError):
        T.grad_check(lambda x: T.exp(x), [np.array([1e4])])


OPS = {
    "add": (lambda a, b: a + b, 2),
    "sub": (lambda a, b: a - b, 2),
    "mul": (lambda a, b: a * b, 2),
    "div": (lambda a, b: a / (b * b + 1.0), 2),
    "matmul": (lambda a, b: a @ b.transpose(1, 0), 2),
    "reshape_transpose": (lambda a: a.reshape(4, 3).transpose(1, 0), 1),
    "concat": (lambda a, b: T.concat([a, b], axis=0), 2),
    "slice": (lambda a: a[1:, ::2], 1),
    "fancy_index": (lambda a: a[np.array([0, 2, 2])], 1),
    "pad": (lambda a: T.pad(a, [(1, 0), (0, 2)]), 1),
    "roll": (lambda a: T.roll(a, (1, -1), (0, 1)), 1),
    "sum": (lambda a: a.sum(axis=1, keepdims=True), 1),
    "mean": (lambda a: a.mean(axis=0), 1),
    "tanh": (lambda a: T.tanh(a), 1),
    "clip": (lambda a: T.clip(a, -0.05, 0.05) + a, 1),
    "exp": (lambda a: T.exp(a), 1),
    "relu": (lambda a: T.relu(a), 1),
    "gelu": (lambda a: T.gelu(a), 1),
    "softplus": (lambda a: T.softplus(a), 1),
    "softshrink": (lambda a: T.softshrink(a, 0.01), 1),
    "softmax": (lambda a: T.softmax(a, axis=-1), 1),
    "layer_norm": (lambda a: T.layer_norm(a, axis=-1), 1),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_every_op_passes_grad_check(name):
    fn, arity = OPS[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    # keep kinks (relu, softshrink) away from the finite-difference stencil
    xs = [rng.choice([-1, 1], size=(3, 4)) * rng.uniform(0.1, 1.5, size=(3, 4)) for _ in range(arity)]
    assert T.grad_check(fn, xs) < 1e-5


# --- FFT -----------------------------------------------------------------------------------

@pytest.mark.parametrize("shape", [(1, 1), (6, 10), (7, 13), (8, 8), (30, 29), (480 // 4, 1152 // 4)])
def test_fft2_against_reference(shape, rng):
    x = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    got = F.fft2(x)
    assert np.max(np.abs(got - np.fft.fft2(x))) < 1e-8 * max(1.0, np.sqrt(x.size)) * 10
    assert np.max(np.abs(F.ifft2(got) - x)) < 1e-10


def test_fft2_matches_naive_dft(rng):
    x = rng.normal(size=(6, 10))
    assert np.max(np.abs(F.fft2(x) - F.naive_dft2(x))) < 1e-4


def test_fft2_constant_field_dc():
    X = F.fft2(np.full((5, 7), 2.5))
    assert X[0, 0] == pytest.approx(2.5 * 35)
    rest = X.copy()
    rest[0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-9


def test_tensor_fft_round_trip_precisions(rng):
    x = rng.normal(size=(1, 6, 10, 3))
    y32 = T.ifft2(T.fft2(Tensor(x), axes=(1, 2)), axes=(1, 2)).re.data
    assert np.max(np.abs(y32 - x.astype(np.float32))) < 1e-5
    with T.precision(np.float64):
        y64 = T.ifft2(T.fft2(Tensor(x), axes=(1, 2)), axes=(1, 2)).re.data
    assert np.max(np.abs(y64 - x)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_parseval(h, w, seed):
    x = np.random.default_rng(seed).normal(size=(h, w))
    lhs = np.sum(x ** 2)
    rhs = np.sum(np.abs(F.fft2(x)) ** 2) / (h * w)
    assert abs(lhs - rhs) <= 1e-4 * max(lhs, 1e-12)


def test_fft_gradients(rng):
    err = T.grad_check(lambda x: T.fft2(x, axes=(0, 1)).im * x, [rng.normal(size=(5, 6, 2))])
    assert err < 1e-5


def test_determinism(rng):
    x = rng.normal(size=(2, 6, 10, 4)).astype(np.float32)
    a = T.fft2(Tensor(x), axes=(1, 2)).re.data
    b = T.fft2(Tensor(x), axes=(1, 2)).re.data
    assert np.array_equal(a, b)
