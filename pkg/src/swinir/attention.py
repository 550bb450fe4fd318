"""Windowed multi-head self-attention, MLP, and the full transformer layer.

Per window of M^2 tokens: project to Q/K/V with shared C x C matrices,
split heads by contiguous channel chunks, form softmax(Q K^T / sqrt(d)
+ B + mask) V per head, concatenate heads, and output-project. B is a
learnable table with one entry per relative (dh, dw) offset, gathered
through a precomputed index. A layer is two pre-LayerNorm residual
sublayers (attention, then a two-layer GELU MLP), with window shift
alternating 0 and M//2 across consecutive layers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensor import (Tensor, gelu, layer_norm, linear, matmul, permute,
                     reshape, softmax, take)
from .windows import (WindowGrid, build_attn_mask, cyclic_shift, unshift,
                      window_partition, window_reverse)


def relative_position_index(m: int) -> np.ndarray:
    """[m^2, m^2] table of bias indices for token pairs inside a window.

    For positions p=(ph,pw), q=(qh,qw):
    index = (ph-qh+m-1)*(2m-1) + (pw-qw+m-1), in [0, (2m-1)^2).
    """
    coords = np.stack(np.meshgrid(np.arange(m), np.arange(m), indexing="ij"))
    flat = coords.reshape(2, -1)
    delta = flat[:, :, None] - flat[:, None, :]
    return (delta[0] + m - 1) * (2 * m - 1) + (delta[1] + m - 1)


@dataclass
class WindowAttentionParams:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    proj_w: Tensor
    proj_b: Tensor
    bias_table: Tensor          # [(2m-1)^2, heads]
    rel_index: np.ndarray       # [m^2, m^2] int, not learned
    heads: int


@dataclass
class MlpParams:
    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor


@dataclass
class StlParams:
    norm1_gamma: Tensor
    norm1_beta: Tensor
    attn: WindowAttentionParams
    norm2_gamma: Tensor
    norm2_beta: Tensor
    mlp: MlpParams
    shift: int


def window_msa(x: Tensor, params: WindowAttentionParams,
               mask: Optional[np.ndarray] = None,
               return_weights: bool = False):
    """Biased multi-head attention over [nW, m^2, C] windows.

    With return_weights, also hands back the [nW, heads, m^2, m^2]
    post-softmax attention matrix (diagnostics only).
    """
    nw, mm, c = x.shape
    h = params.heads
    if c % h:
        raise ValueError(f"{h} heads do not divide {c} channels")
    d = c // h

    def split_heads(t: Tensor) -> Tensor:
        return permute(reshape(t, nw, mm, h, d), 0, 2, 1, 3)

    q = split_heads(linear(x, params.wq, params.bq))
    k = split_heads(linear(x, params.wk, params.bk))
    v = split_heads(linear(x, params.wv, params.bv))

    logits = matmul(q, permute(k, 0, 1, 3, 2)) * (1.0 / math.sqrt(d))

    bias = take(params.bias_table, params.rel_index.reshape(-1), axis=0)
    bias = permute(reshape(bias, mm, mm, h), 2, 0, 1)
    logits = logits + bias

    if mask is not None:
        nw_mask = mask.shape[0]
        if nw % nw_mask:
            raise ValueError(f"{nw} windows not a multiple of {nw_mask} mask windows")
        batch = nw // nw_mask
        logits = reshape(logits, batch, nw_mask, h, mm, mm)
        logits = logits + Tensor(mask[None, :, None].astype(x.dtype, copy=False))
        logits = reshape(logits, nw, h, mm, mm)

    attn = softmax(logits)
    out = matmul(attn, v)
    out = reshape(permute(out, 0, 2, 1, 3), nw, mm, c)
    out = linear(out, params.proj_w, params.proj_b)
    if return_weights:
        return out, attn
    return out


def mlp_forward(x: Tensor, params: MlpParams) -> Tensor:
    return linear(gelu(linear(x, params.fc1_w, params.fc1_b)),
                  params.fc2_w, params.fc2_b)


def stl_forward(x: Tensor, params: StlParams, grid: WindowGrid) -> Tensor:
    """One transformer layer on [N, H, W, C]; H, W already window-aligned."""
    m, s = grid.window, params.shift

    y = layer_norm(x, params.norm1_gamma, params.norm1_beta)
    y = cyclic_shift(y, s)
    wins = window_partition(y, m)
    mask = build_attn_mask(grid.height, grid.width, m, s) if s else None
    wins = window_msa(wins, params.attn, mask)
    y = window_reverse(wins, m, grid.height, grid.width)
    y = unshift(y, s)
    x = x + y

    y = layer_norm(x, params.norm2_gamma, params.norm2_beta)
    return x + mlp_forward(y, params.mlp)
