"""
Normalization, embedding, rotary positions and grouped-query attention.

Layers are plain functions over :class:`Tensor` values; weights are looked up
in the flat parameter mapping by dotted prefix.
"""

import math
from typing import Mapping, Optional

import numpy as np

from src.common.exceptions import ConfigurationError
from src.model.schemas import ForwardContext, ModelConfig, NormScheme
from src.tensor import ops
from src.tensor.tensor import Tensor

Params = Mapping[str, Tensor]

RMS_EPS = 1e-6
NORM_EPS = 1e-5


# --- normalization ---


def rms_norm(
    x: Tensor, scale: Optional[Tensor] = None, axis=-1, eps: float = RMS_EPS
) -> Tensor:
    ms = (x * x).mean(axis=axis, keepdims=True)
    out = x / ops.sqrt(ms + eps)
    return out * scale if scale is not None else out


def layer_norm(
    x: Tensor, scale: Optional[Tensor] = None, axis=-1, eps: float = NORM_EPS
) -> Tensor:
    """Bias-free layer normalization."""
    mu = x.mean(axis=axis, keepdims=True)
    out = (x - mu) / ops.sqrt(x.var(axis=axis, keepdims=True) + eps)
    return out * scale if scale is not None else out


def group_norm(
    x: Tensor, scale: Optional[Tensor] = None, eps: float = NORM_EPS
) -> Tensor:
    """
    Single-group normalization of ``(..., C, T)``: statistics over channels
    and positions together, optional per-channel scale ``(C,)``.
    """
    out = layer_norm(x, axis=(-2, -1), eps=eps)
    if scale is None:
        return out
    return out * scale.reshape(scale.shape[0], 1)


def block_norm(x: Tensor, scale: Tensor, scheme: NormScheme) -> Tensor:
    """Pre-norm of a residual branch over the feature axis."""
    if scheme == 'layernorm':
        return layer_norm(x, scale)
    return rms_norm(x, scale)


def patch_norm(patches: Tensor, scheme: NormScheme) -> Tensor:
    """Per-patch normalization of raw values before embedding."""
    if scheme == 'rmsnorm':
        return rms_norm(patches, eps=NORM_EPS)
    # one group over a single-channel patch is a layer norm over its values
    return layer_norm(patches)


def channel_norm(x: Tensor, scale: Tensor, scheme: NormScheme) -> Tensor:
    """Decoder normalization of ``(R, C, T)`` feature maps."""
    if scheme == 'mixed':
        return group_norm(x, scale)
    column = scale.reshape(scale.shape[0], 1)
    if scheme == 'layernorm':
        return layer_norm(x, axis=-2) * column
    return rms_norm(x, axis=-2) * column


# --- embedding ---


def patchify(x: Tensor, patch: int) -> Tensor:
    """Differentiable ``(..., L) -> (..., S, P)`` with repeat-last padding."""
    length = x.shape[-1]
    n_patches = -(-length // patch)
    pad = n_patches * patch - length
    if pad:
        last = x[..., -1:]
        x = ops.concat([x] + [last] * pad, axis=-1)
    return x.reshape(x.shape[:-1] + (n_patches, patch))


def patch_embed(
    patches: Tensor, weight: Tensor, scheme: NormScheme
) -> Tensor:
    """``(R, S, P) -> (R, S, d_model)``: normalize, then a bias-free map."""
    return patch_norm(patches, scheme) @ weight


def fuse_covariates(
    x: Tensor, z: Tensor, params: Params, prefix: str = 'fusion'
) -> Tensor:
    """
    Mix endogenous ``x (B, D, L)`` and covariates ``z (B, C, L)`` per time
    step back to ``(B, D, L)``.
    """
    if x.shape[-1] != z.shape[-1]:
        raise ConfigurationError(
            'Covariates must be time-aligned with the inputs',
            shapes=(x.shape, z.shape),
        )
    hx = x.swapaxes(-1, -2) @ params[f'{prefix}.w_x']
    hz = z.swapaxes(-1, -2) @ params[f'{prefix}.w_z']
    fused = ops.concat([hx, hz], axis=-1) @ params[f'{prefix}.w_fuse']
    return fused.swapaxes(-1, -2)


# --- rotary positions ---


def rope_tables(
    n_positions: int, head_dim: int, base: float, dtype, offset: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    if head_dim % 2:
        raise ConfigurationError(
            f'Rotary embedding needs an even head dimension, got {head_dim}',
            key='head_dim',
        )
    pairs = np.arange(0, head_dim, 2, dtype=np.float64)
    inv_freq = base ** (-pairs / head_dim)
    positions = np.arange(offset, offset + n_positions, dtype=np.float64)
    angles = np.outer(positions, inv_freq)
    return np.cos(angles).astype(dtype), np.sin(angles).astype(dtype)


def rope_rotate(
    x: Tensor, base: float = 10000.0, offset: int = 0
) -> Tensor:
    """
    Rotate interleaved feature pairs of ``(..., S, d_head)`` by
    ``position * base^(-2j / d_head)``; position ``offset`` is the first.
    """
    n_positions, head_dim = x.shape[-2], x.shape[-1]
    cos, sin = rope_tables(n_positions, head_dim, base, x.dtype, offset)
    cos_t, sin_t = Tensor(cos, dtype=x.dtype), Tensor(sin, dtype=x.dtype)
    even, odd = x[..., 0::2], x[..., 1::2]
    rot_even = even * cos_t - odd * sin_t
    rot_odd = even * sin_t + odd * cos_t
    half = x.shape[:-1] + (head_dim // 2, 1)
    paired = ops.concat(
        [rot_even.reshape(half), rot_odd.reshape(half)], axis=-1
    )
    return paired.reshape(x.shape)


# --- attention ---


def _split_heads(t: Tensor, n_heads: int, head_dim: int) -> Tensor:
    """``(R, S, H * dh) -> (R, H, S, dh)``."""
    rows, length = t.shape[0], t.shape[1]
    return t.reshape(rows, length, n_heads, head_dim).transpose(0, 2, 1, 3)


def grouped_attention(
    queries: Tensor,
    keys_values: Tensor,
    params: Params,
    prefix: str,
    config: ModelConfig,
    ctx: ForwardContext,
    rotate: bool = True,
) -> Tensor:
    """
    Scaled dot-product attention where each key/value head serves
    ``q_heads / kv_heads`` consecutive query heads.

    ``queries`` are ``(R, S_q, d)``, ``keys_values`` are ``(R, S_k, d)``.
    Query/key/value projections carry a bias; the output projection does
    not.
    """
    rows, s_q = queries.shape[0], queries.shape[1]
    s_k = keys_values.shape[1]
    hq, hkv, dh = config.q_heads, config.kv_heads, config.head_dim
    group = config.group_size

    q = queries @ params[f'{prefix}.wq'] + params[f'{prefix}.bq']
    k = keys_values @ params[f'{prefix}.wk'] + params[f'{prefix}.bk']
    v = keys_values @ params[f'{prefix}.wv'] + params[f'{prefix}.bv']

    q = _split_heads(q, hq, dh)
    k = _split_heads(k, hkv, dh)
    if rotate:
        q = rope_rotate(q, config.rope_base)
        k = rope_rotate(k, config.rope_base)
    v = _split_heads(v, hkv, dh)

    # (R, Hkv, G, S_q, dh) against (R, Hkv, 1, S_k, dh)
    q = q.reshape(rows, hkv, group, s_q, dh)
    k = k.reshape(rows, hkv, 1, s_k, dh)
    v = v.reshape(rows, hkv, 1, s_k, dh)

    logits = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
    weights = ops.softmax(logits)
    if ctx.record_attention:
        ctx.attention.append(weights.data.reshape(rows, hq, s_q, s_k))
    weights = ops.dropout(weights, config.dropout, ctx.rng, ctx.training)

    out = (weights @ v).reshape(rows, hq, s_q, dh)
    out = out.transpose(0, 2, 1, 3).reshape(rows, s_q, hq * dh)
    out = out @ params[f'{prefix}.wo']
    return ops.dropout(out, config.dropout, ctx.rng, ctx.training)


def self_attention_block(
    h: Tensor,
    params: Params,
    prefix: str,
    config: ModelConfig,
    ctx: ForwardContext,
    drop_rate: float,
) -> Tensor:
    """``h + DropPath(Attn(Norm(h)))``."""
    normed = block_norm(h, params[f'{prefix}.norm.scale'], config.norm_scheme)
    branch = grouped_attention(normed, normed, params, prefix, config, ctx)
    return h + ops.drop_path(branch, drop_rate, ctx.rng, ctx.training)


def cross_attention_block(
    h: Tensor,
    kv_tokens: Tensor,
    params: Params,
    prefix: str,
    config: ModelConfig,
    ctx: ForwardContext,
    drop_rate: float,
) -> Tensor:
    """``h + DropPath(CrossAttn(Norm(h), kv_tokens))``."""
    normed = block_norm(h, params[f'{prefix}.norm.scale'], config.norm_scheme)
    branch = grouped_attention(
        normed,
        kv_tokens,
        params,
        prefix,
        config,
        ctx,
        rotate=config.rope_on_cross,
    )
    return h + ops.drop_path(branch, drop_rate, ctx.rng, ctx.training)
