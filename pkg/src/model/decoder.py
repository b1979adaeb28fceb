"""Output heads mapping final patch embeddings to ``H_o`` values per row."""

from src.model.layers import Params, block_norm, channel_norm
from src.model.schemas import ModelConfig
from src.tensor import ops
from src.tensor.tensor import Tensor


def conv_head(h: Tensor, params: Params, config: ModelConfig) -> Tensor:
    """
    Final norm, a ``d x d`` projection, then the trailing
    ``ceil(H_o / P)`` tokens are unpatched by a transposed convolution and
    refined by a depthwise convolution, single-group norm and a 4x
    bottleneck down to one channel. When ``P`` does not divide ``H_o`` the
    decoded steps past ``H_o`` are dropped.
    """
    rows = h.shape[0]
    normed = block_norm(h, params['head.norm.scale'], config.norm_scheme)
    projected = normed @ params['head.proj.w']
    trailing = projected[:, -config.n_out_patches:, :]

    channels = trailing.swapaxes(-1, -2)
    series = ops.transpose_conv1d(
        channels, params['head.unpatch.w'], stride=config.patch
    )
    series = ops.depthwise_conv1d(series, params['head.dwconv.w'])
    series = channel_norm(
        series, params['head.gnorm.scale'], config.norm_scheme
    )
    hidden = ops.gelu(ops.pointwise_conv1d(series, params['head.pw1.w']))
    out = ops.pointwise_conv1d(hidden, params['head.pw2.w'])
    out = out.reshape(rows, config.n_out_patches * config.patch)
    if out.shape[-1] != config.horizon_out:
        out = out[:, : config.horizon_out]
    return out


def mlp_head(h: Tensor, params: Params, config: ModelConfig) -> Tensor:
    """Flatten all tokens and project ``S * d -> d -> H_o``."""
    rows = h.shape[0]
    normed = block_norm(h, params['head.norm.scale'], config.norm_scheme)
    flat = normed.reshape(rows, config.n_patches * config.d_model)
    hidden = ops.gelu(flat @ params['head.fc1.w'])
    return hidden @ params['head.fc2.w']


HEADS = {'conv': conv_head, 'mlp': mlp_head}


def patch_decode(h: Tensor, params: Params, config: ModelConfig) -> Tensor:
    """``(R, S, d) -> (R, H_o)`` in normalized units."""
    return HEADS[config.head](h, params, config)

