"""Patch embedding/recovery, AFNO mixing layers and shifted-window attention.

Token grids are laid out as (B, H', W', D).
"""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from ..tensor.nn import Module, Linear, LayerNorm, MLP, parameter, trunc_normal


def padded_extent(n: int, m: int) -> int:
    return -(-n // m) * m


class PatchEmbed(Module):
    """Zero-pad (C, H, W) on the high ends to multiples of P and map each
    P x P x C patch to D features with one affine map."""

    def __init__(self, in_channels: int, patch: int, dim: int, rng: np.random.Generator):
        self.in_channels = in_channels
        self.patch = patch
        self.dim = dim
        self.proj = Linear(patch * patch * in_channels, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        B, C, H, W = x.shape
        if C != self.in_channels:
            raise T.ShapeError(f"patch embed expects {self.in_channels} channels, got {C}")
        P = self.patch
        Hp, Wp = padded_extent(H, P), padded_extent(W, P)
        x = T.pad(x, [(0, 0), (0, 0), (0, Hp - H), (0, Wp - W)])
        x = x.reshape(B, C, Hp // P, P, Wp // P, P).transpose(0, 2, 4, 3, 5, 1)
        x = x.reshape(B, Hp // P, Wp // P, P * P * C)
        return self.proj(x)


class PatchRecover(Module):
    """Map each token to a P x P x K block, tile the canvas and crop to (H, W)."""

    def __init__(self, dim: int, patch: int, out_channels: int, rng: np.random.Generator,
                 zero: bool = True):
        self.dim = dim
        self.patch = patch
        self.out_channels = out_channels
        self.proj = Linear(dim, patch * patch * out_channels, rng, zero=zero)

    def forward(self, tokens: Tensor, H: int, W: int) -> Tensor:
        B, Ht, Wt, D = tokens.shape
        P, K = self.patch, self.out_channels
        if (Ht, Wt) != (padded_extent(H, P) // P, padded_extent(W, P) // P):
            raise T.ShapeError(f"token grid {Ht}x{Wt} inconsistent with output {H}x{W} at patch {P}")
        y = self.proj(tokens).reshape(B, Ht, Wt, P, P, K).transpose(0, 5, 1, 3, 2, 4)
        y = y.reshape(B, K, Ht * P, Wt * P)
        if (Ht * P, Wt * P) != (H, W):
            y = y[:, :, :H, :W]
        return y


class SpectralMix(Module):
    """AFNO token mixer: FFT over the token grid, a block-diagonal two-layer
    complex MLP applied at every frequency, soft-shrinkage, inverse FFT and
    the real part."""

    def __init__(self, dim: int, blocks: int, sparsity: float, hidden_factor: int,
                 rng: np.random.Generator):
        if dim % blocks:
            raise T.ShapeError(f"dim {dim} not divisible by {blocks} blocks")
        self.dim, self.blocks, self.sparsity = dim, blocks, sparsity
        b = dim // blocks
        h = b * hidden_factor
        self.w1_re = parameter(trunc_normal(rng, (blocks, b, h)))
        self.w1_im = parameter(trunc_normal(rng, (blocks, b, h)))
        self.b1_re = parameter(np.zeros((blocks, 1, h)))
        self.b1_im = parameter(np.zeros((blocks, 1, h)))
        self.w2_re = parameter(trunc_normal(rng, (blocks, h, b)))
        self.w2_im = parameter(trunc_normal(rng, (blocks, h, b)))
        self.b2_re = parameter(np.zeros((blocks, 1, b)))
        self.b2_im = parameter(np.zeros((blocks, 1, b)))
        self.linear = False  # bypass both nonlinearities (used for checks)

    def forward(self, x: Tensor) -> Tensor:
        B, H, W, D = x.shape
        k, b = self.blocks, D // self.blocks
        z = T.fft2(x, axes=(1, 2))

        def blocks_first(t):
            return t.reshape(B * H * W, k, b).transpose(1, 0, 2)

        xr, xi = blocks_first(z.re), blocks_first(z.im)
        act = (lambda t: t) if self.linear else T.relu
        o1r = act(xr @ self.w1_re - xi @ self.w1_im + self.b1_re)
        o1i = act(xr @ self.w1_im + xi @ self.w1_re + self.b1_im)
        o2r = o1r @ self.w2_re - o1i @ self.w2_im + self.b2_re
        o2i = o1r @ self.w2_im + o1i @ self.w2_re + self.b2_im
        if not self.linear and self.sparsity > 0:
            o2r = T.softshrink(o2r, self.sparsity)
            o2i = T.softshrink(o2i, self.sparsity)

        def blocks_last(t):
            return t.transpose(1, 0, 2).reshape(B, H, W, D)

        y = T.ifft2(T.ComplexTensor(blocks_last(o2r), blocks_last(o2i)), axes=(1, 2))
        return y.re


class AFNOLayer(Module):
    """y = x + SpectralMix(LN(x)); out = y + MLP(LN(y))."""

    def __init__(self, dim: int, blocks: int, sparsity: float, hidden_factor: int,
                 mlp_ratio: int, rng: np.random.Generator):
        self.norm1 = LayerNorm(dim)
        self.mix = SpectralMix(dim, blocks, sparsity, hidden_factor, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = MLP(dim, mlp_ratio * dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        y = x + self.mix(self.norm1(x))
        return y + self.mlp(self.norm2(y))


# --- windowed attention ------------------------------------------------------

def window_partition(x: Tensor, M: int) -> Tensor:
    """(B, H, W, D) -> (B * nW, M*M, D) with H, W multiples of M."""
    B, H, W, D = x.shape
    x = x.reshape(B, H // M, M, W // M, M, D).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(B * (H // M) * (W // M), M * M, D)


def window_merge(w: Tensor, M: int, B: int, H: int, W: int) -> Tensor:
    """Inverse of :func:`window_partition`."""
    D = w.shape[-1]
    x = w.reshape(B, H // M, W // M, M, M, D).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(B, H, W, D)


def relative_position_index(M: int) -> np.ndarray:
    coords = np.stack(np.meshgrid(np.arange(M), np.arange(M), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :]
    rel = rel.transpose(1, 2, 0) + (M - 1)
    return rel[..., 0] * (2 * M - 1) + rel[..., 1]


def shift_attention_mask(H: int, W: int, M: int, s: int) -> np.ndarray:
    """(nW, M*M, M*M) additive mask blocking pairs that came from different
    regions of the cyclically shifted canvas."""
    img = np.zeros((H, W), dtype=np.int64)
    cnt = 0
    for hs in (slice(0, -M), slice(-M, -s), slice(-s, None)):
        for ws in (slice(0, -M), slice(-M, -s), slice(-s, None)):
            img[hs, ws] = cnt
            cnt += 1
    win = img.reshape(H // M, M, W // M, M).transpose(0, 2, 1, 3).reshape(-1, M * M)
    diff = win[:, :, None] != win[:, None, :]
    return np.where(diff, -100.0, 0.0)


class WindowAttention(Module):
    def __init__(self, dim: int, window: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise T.ShapeError(f"dim {dim} not divisible by {heads} heads")
        self.dim, self.window, self.heads = dim, window, heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.rel_bias = parameter(trunc_normal(rng, ((2 * window - 1) ** 2, heads)))
        self._index = relative_position_index(window).reshape(-1)
        self.keep_attn = False
        self.last_attn = None

    def forward(self, x: Tensor, mask: np.ndarray | None, n_windows: int) -> Tensor:
        Bw, N, D = x.shape
        nH, hd = self.heads, D // self.heads
        qkv = self.qkv(x).reshape(Bw, N, 3, nH, hd).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * (hd ** -0.5)) @ k.transpose(0, 1, 3, 2)
        bias = self.rel_bias[self._index].reshape(N, N, nH).transpose(2, 0, 1)
        attn = attn + bias
        if mask is not None:
            attn = attn.reshape(Bw // n_windows, n_windows, nH, N, N)
            attn = attn + Tensor(mask[None, :, None], dtype=attn.dtype)
            attn = attn.reshape(Bw, nH, N, N)
        attn = T.softmax(attn, axis=-1)
        if self.keep_attn:
            self.last_attn = attn.data
        out = (attn @ v).transpose(0, 2, 1, 3).reshape(Bw, N, D)
        return self.proj(out)


class SwinLayer(Module):
    """y = x + W-MSA(LN(x)); out = y + MLP(LN(y)), with optional cyclic shift."""

    def __init__(self, dim: int, window: int, heads: int, shift: int, mlp_ratio: int,
                 rng: np.random.Generator):
        self.window, self.shift = window, shift
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, window, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = MLP(dim, mlp_ratio * dim, rng)

    def mixer(self, x: Tensor) -> Tensor:
        B, H, W, D = x.shape
        M = self.window
        Hp, Wp = padded_extent(H, M), padded_extent(W, M)
        x = T.pad(x, [(0, 0), (0, Hp - H), (0, Wp - W), (0, 0)])
        s = self.shift if (Hp > M and Wp > M) else 0
        mask = None
        if s:
            x = T.roll(x, (-s, -s), (1, 2))
            mask = shift_attention_mask(Hp, Wp, M, s)
        n_windows = (Hp // M) * (Wp // M)
        w = self.attn(window_partition(x, M), mask, n_windows)
        x = window_merge(w, M, B, Hp, Wp)
        if s:
            x = T.roll(x, (s, s), (1, 2))
        if (Hp, Wp) != (H, W):
            x = x[:, :H, :W]
        return x

    def forward(self, x: Tensor) -> Tensor:
        y = x + self.mixer(self.norm1(x))
        return y + self.mlp(self.norm2(y))
