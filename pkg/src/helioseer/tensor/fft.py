"""Mixed-radix FFT with a Bluestein fallback for large prime lengths.

All transforms work on complex numpy arrays along one axis and are vectorized
over the remaining axes. Composite lengths are split by their smallest prime
factor (decimation in time); primes up to ``DIRECT_MAX`` use a dense DFT
matrix, larger primes go through Bluestein's chirp-z convolution on a
power-of-two length.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

DIRECT_MAX = 32


def _smallest_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=None)
def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    # exact integer phase reduction keeps large-n entries accurate
    return np.exp(-2j * np.pi * ((np.outer(k, k) % n) / n))


@lru_cache(maxsize=None)
def _twiddles(p: int, m: int) -> np.ndarray:
    n = p * m
    j2 = np.arange(p)[:, None]
    k1 = np.arange(m)[None, :]
    return np.exp(-2j * np.pi * (((j2 * k1) % n) / n))


@lru_cache(maxsize=None)
def _bluestein_plan(n: int):
    L = 1
    while L < 2 * n - 1:
        L *= 2
    k = np.arange(n)
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    b = np.zeros(L, dtype=complex)
    b[:n] = np.conj(chirp)
    b[L - n + 1:] = np.conj(chirp[1:])[::-1]
    return L, chirp, _fft_last(b)


def _fft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    p = _smallest_factor(n)
    if p == n:
        if n <= DIRECT_MAX:
            return x @ _dft_matrix(n).T
        return _bluestein(x)
    m = n // p
    lead = x.shape[:-1]
    # x[p*j1 + j2] -> sub[..., j2, j1]; transform each residue class of length m
    sub = np.swapaxes(x.reshape(lead + (m, p)), -1, -2)
    y = _fft_last(sub) * _twiddles(p, m)
    # length-p butterflies across residue classes: out[k1 + m*k2]
    z = np.swapaxes(y, -1, -2) @ _dft_matrix(p).T
    return np.swapaxes(z, -1, -2).reshape(lead + (n,))


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    L, chirp, fb = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (L,), dtype=complex)
    a[..., :n] = x * chirp
    conv = _ifft_last(_fft_last(a) * fb)
    return conv[..., :n] * chirp


def _ifft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    return np.conj(_fft_last(np.conj(x))) / n


def fft(x, axis: int = -1) -> np.ndarray:
    """Unnormalized forward DFT along ``axis``."""
    x = np.moveaxis(np.asarray(x, dtype=complex), axis, -1)
    return np.moveaxis(_fft_last(x), -1, axis)


def ifft(x, axis: int = -1) -> np.ndarray:
    """Inverse DFT along ``axis`` with 1/n normalization."""
    x = np.moveaxis(np.asarray(x, dtype=complex), axis, -1)
    return np.moveaxis(_ifft_last(x), -1, axis)


def fft2(x, axes=(-2, -1)) -> np.ndarray:
    return fft(fft(x, axes[0]), axes[1])


def ifft2(x, axes=(-2, -1)) -> np.ndarray:
    return ifft(ifft(x, axes[0]), axes[1])


def naive_dft2(x) -> np.ndarray:
    """O(N^2) double loop over output frequencies; reference only."""
    x = np.asarray(x, dtype=complex)
    H, W = x.shape[-2:]
    out = np.zeros_like(x)
    i = np.arange(H)[:, None]
    j = np.arange(W)[None, :]
    for u in range(H):
        for v in range(W):
            phase = np.exp(-2j * np.pi * (u * i / H + v * j / W))
            out[..., u, v] = (x * phase).sum(axis=(-2, -1))
    return out
