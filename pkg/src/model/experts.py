"""
Expert feed-forward networks and the heterogeneous expert layer.

Routed experts act on single tokens ``(n, d)``; shared experts see the
whole patch sequence ``(R, S, d)`` of each row.
"""

import logging
from typing import Callable

import numpy as np

from src.model.layers import Params, block_norm
from src.model.schemas import ForwardContext, ModelConfig, RouterAssignment
from src.tensor import ops
from src.tensor.tensor import Tensor

logger = logging.getLogger(__name__)


def fourier_layer(x: Tensor, params: Params, prefix: str) -> Tensor:
    """``[cos(x W_p) || sin(x W_p) || GELU(x W_pbar + b_pbar)]``."""
    periodic = x @ params[f'{prefix}.w_p']
    gated = ops.gelu(
        x @ params[f'{prefix}.w_pbar'] + params[f'{prefix}.b_pbar']
    )
    return ops.concat([ops.cos(periodic), ops.sin(periodic), gated], axis=-1)


def fa_ffn(
    x: Tensor,
    params: Params,
    prefix: str,
    config: ModelConfig,
    ctx: ForwardContext,
) -> Tensor:
    """Two stacked Fourier layers, ``d_model -> d_ff -> d_model``."""
    hidden = fourier_layer(x, params, f'{prefix}.fc1')
    hidden = ops.dropout(hidden, config.dropout, ctx.rng, ctx.training)
    return fourier_layer(hidden, params, f'{prefix}.fc2')


def mlp_ffn(
    x: Tensor,
    params: Params,
    prefix: str,
    config: ModelConfig,
    ctx: ForwardContext,
) -> Tensor:
    hidden = ops.gelu(x @ params[f'{prefix}.w1'])
    hidden = ops.dropout(hidden, config.dropout, ctx.rng, ctx.training)
    return hidden @ params[f'{prefix}.w2']


def conv_ffn(
    x: Tensor,
    params: Params,
    prefix: str,
    config: ModelConfig,
    ctx: ForwardContext,
) -> Tensor:
    """Pointwise expansion, GELU, pointwise projection over ``(R, S, d)``."""
    channels = x.swapaxes(-1, -2)
    hidden = ops.gelu(ops.pointwise_conv1d(channels, params[f'{prefix}.pw1']))
    hidden = ops.dropout(hidden, config.dropout, ctx.rng, ctx.training)
    out = ops.pointwise_conv1d(hidden, params[f'{prefix}.pw2'])
    return out.swapaxes(-1, -2)


def dwconv_ffn(
    x: Tensor,
    params: Params,
    prefix: str,
    config: ModelConfig,
    ctx: ForwardContext,
) -> Tensor:
    """
    Depthwise convolution along the patch axis per feature channel, then
    pointwise ``d -> d_ff``, GELU, dropout, pointwise ``d_ff -> d``.
    """
    channels = x.swapaxes(-1, -2)
    mixed = ops.depthwise_conv1d(channels, params[f'{prefix}.dw'])
    hidden = ops.gelu(ops.pointwise_conv1d(mixed, params[f'{prefix}.pw1']))
    hidden = ops.dropout(hidden, config.dropout, ctx.rng, ctx.training)
    out = ops.pointwise_conv1d(hidden, params[f'{prefix}.pw2'])
    return out.swapaxes(-1, -2)


ExpertFn = Callable[
    [Tensor, Params, str, ModelConfig, ForwardContext], Tensor
]

ROUTED_EXPERTS: dict[str, ExpertFn] = {'fa': fa_ffn, 'mlp': mlp_ffn}

# Every kind works on (R, S, d); token-wise ones just ignore the sequence
SHARED_EXPERTS: dict[str, ExpertFn] = {
    'dwconv': dwconv_ffn,
    'conv': conv_ffn,
    'mlp': mlp_ffn,
    'fa': fa_ffn,
}


def route(
    tokens: Tensor, router_weight: Tensor, top_k: int
) -> tuple[Tensor, np.ndarray, Tensor]:
    """
    Softmax router with top-k masking.

    Returns the differentiable scores ``(T, N)``, the selected indices
    ``(T, K)`` and the gates: scores where selected, exactly zero elsewhere,
    never renormalized.
    """
    scores = ops.softmax(tokens @ router_weight)
    indices, mask = ops.topk_mask(scores.data, top_k)
    gates = scores * Tensor(mask.astype(scores.dtype), dtype=scores.dtype)
    return scores, indices, gates


def _sparse_dispatch(
    tokens: Tensor,
    gates: Tensor,
    indices: np.ndarray,
    params: Params,
    prefix: str,
    config: ModelConfig,
    ctx: ForwardContext,
) -> Tensor:
    """Evaluate each expert only on the tokens routed to it."""
    expert = ROUTED_EXPERTS[config.routed_expert]
    n_tokens = tokens.shape[0]
    out = None
    for i in range(config.n_experts):
        rows = np.flatnonzero((indices == i).any(axis=-1))
        if rows.size == 0:
            continue
        ctx.expert_evaluations += int(rows.size)
        y = expert(
            ops.take(tokens, rows), params, f'{prefix}.{i}', config, ctx
        )
        weighted = y * ops.take(gates[:, i:i + 1], rows)
        contribution = ops.scatter_add(weighted, rows, n_tokens)
        out = contribution if out is None else out + contribution
    return out


def _dense_dispatch(
    tokens: Tensor,
    gates: Tensor,
    params: Params,
    prefix: str,
    config: ModelConfig,
    ctx: ForwardContext,
) -> Tensor:
    """Reference path: every expert on every token, weighted by the gates."""
    expert = ROUTED_EXPERTS[config.routed_expert]
    out = None
    for i in range(config.n_experts):
        ctx.expert_evaluations += tokens.shape[0]
        y = expert(tokens, params, f'{prefix}.{i}', config, ctx)
        contribution = y * gates[:, i:i + 1]
        out = contribution if out is None else out + contribution
    return out


def mohe_forward(
    v: Tensor,
    params: Params,
    prefix: str,
    config: ModelConfig,
    ctx: ForwardContext,
    drop_rate: float = 0.0,
) -> tuple[Tensor, RouterAssignment]:
    """
    Heterogeneous expert layer on ``(R, S, d)``.

    ``v + DropPath(sigmoid(v_bar w_g) * Shared(v_bar) + sum_i g_i E_i(v_bar))``
    with ``v_bar`` the pre-normed input.
    """
    rows, length, width = v.shape
    normed = block_norm(v, params[f'{prefix}.norm.scale'], config.norm_scheme)

    shared_kind = SHARED_EXPERTS[config.shared_expert]
    shared = shared_kind(normed, params, f'{prefix}.shared', config, ctx)
    shared_gate = ops.sigmoid(normed @ params[f'{prefix}.shared_gate.w'])

    tokens = normed.reshape(rows * length, width)
    scores, indices, gates = route(
        tokens, params[f'{prefix}.router.w'], config.top_k
    )
    if ctx.dense:
        routed = _dense_dispatch(
            tokens, gates, params, f'{prefix}.experts', config, ctx
        )
    else:
        routed = _sparse_dispatch(
            tokens, gates, indices, params, f'{prefix}.experts', config, ctx
        )

    branch = shared * shared_gate + routed.reshape(rows, length, width)
    out = v + ops.drop_path(branch, drop_rate, ctx.rng, ctx.training)

    assignment = RouterAssignment(
        indices=indices,
        gates=gates.data,
        shared_gate=shared_gate.data.reshape(-1),
        scores=scores,
        top_k=config.top_k,
    )
    ctx.assignments.append(assignment)
    return out, assignment
