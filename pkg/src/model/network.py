"""
Parameter construction, the full forward pass and parameter accounting.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from src.common.exceptions import ConfigurationError
from src.data.schemas import NormStats
from src.data.service import instance_denormalize, patchify
from src.model.decoder import patch_decode
from src.model.experts import mohe_forward
from src.model.layers import (
    cross_attention_block,
    fuse_covariates,
    patch_embed,
    self_attention_block,
)
from src.model.layers import patchify as patchify_tensor
from src.model.schemas import ForwardContext, ModelConfig, RouterAssignment
from src.tensor.random import (
    constant_fill,
    make_generator,
    normal_fill,
    xavier_uniform,
)
from src.tensor.tensor import Tensor, get_default_dtype

logger = logging.getLogger(__name__)


@dataclass
class ParamSpec:
    shape: tuple[int, ...]
    init: str  # xavier | normal | ones | zeros
    expert: Optional[int] = None  # routed-expert index


class ModelParams:
    """Ordered mapping of dotted parameter names to tensors."""

    def __init__(self, tensors: dict[str, Tensor]):
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.tensors.values())).dtype

    @property
    def n_elements(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.tensors.items()}

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def astype(self, dtype) -> 'ModelParams':
        return ModelParams(
            {
                name: Tensor(
                    t.data.astype(dtype), requires_grad=True, name=name
                )
                for name, t in self.tensors.items()
            }
        )


def _attention_specs(prefix: str, config: ModelConfig) -> dict[str, ParamSpec]:
    d = config.d_model
    kv_width = config.kv_heads * config.head_dim
    return {
        f'{prefix}.norm.scale': ParamSpec((d,), 'ones'),
        f'{prefix}.wq': ParamSpec((d, d), 'xavier'),
        f'{prefix}.bq': ParamSpec((d,), 'zeros'),
        f'{prefix}.wk': ParamSpec((d, kv_width), 'xavier'),
        f'{prefix}.bk': ParamSpec((kv_width,), 'zeros'),
        f'{prefix}.wv': ParamSpec((d, kv_width), 'xavier'),
        f'{prefix}.bv': ParamSpec((kv_width,), 'zeros'),
        f'{prefix}.wo': ParamSpec((d, d), 'xavier'),
    }


def _fourier_specs(
    prefix: str, d_in: int, d_out: int, expert: Optional[int]
) -> dict[str, ParamSpec]:
    return {
        f'{prefix}.w_p': ParamSpec((d_in, d_out // 4), 'normal', expert),
        f'{prefix}.w_pbar': ParamSpec((d_in, d_out // 2), 'normal', expert),
        f'{prefix}.b_pbar': ParamSpec((d_out // 2,), 'zeros', expert),
    }


def _expert_specs(
    kind: str, prefix: str, config: ModelConfig, expert: Optional[int] = None
) -> dict[str, ParamSpec]:
    d, d_ff = config.d_model, config.ffn_dim
    if kind == 'fa':
        return {
            **_fourier_specs(f'{prefix}.fc1', d, d_ff, expert),
            **_fourier_specs(f'{prefix}.fc2', d_ff, d, expert),
        }
    if kind == 'mlp':
        return {
            f'{prefix}.w1': ParamSpec((d, d_ff), 'xavier', expert),
            f'{prefix}.w2': ParamSpec((d_ff, d), 'xavier', expert),
        }
    specs = {}
    if kind == 'dwconv':
        specs[f'{prefix}.dw'] = ParamSpec((d, config.shared_kernel), 'xavier')
    specs[f'{prefix}.pw1'] = ParamSpec((d_ff, d), 'xavier')
    specs[f'{prefix}.pw2'] = ParamSpec((d, d_ff), 'xavier')
    return specs


def param_specs(config: ModelConfig) -> dict[str, ParamSpec]:
    """Every learnable tensor of ``config`` with its shape and init."""
    if config.n_variates is None or config.n_covariates is None:
        raise ConfigurationError(
            'n_variates and n_covariates must be set before building '
            'parameters',
            key='n_variates',
        )
    d, p = config.d_model, config.patch
    specs: dict[str, ParamSpec] = {'embed.w': ParamSpec((p, d), 'xavier')}
    if config.covariates_active:
        n_var, n_cov = config.n_variates, config.n_covariates
        specs.update(
            {
                'fusion.w_x': ParamSpec((n_var, d), 'xavier'),
                'fusion.w_z': ParamSpec((n_cov, d), 'xavier'),
                'fusion.w_fuse': ParamSpec((2 * d, n_var), 'xavier'),
                'kv_embed.w': ParamSpec((p, d), 'xavier'),
            }
        )
    for b in range(config.n_blocks):
        block = f'blocks.{b}'
        specs.update(_attention_specs(f'{block}.attn', config))
        if config.covariates_active:
            specs.update(_attention_specs(f'{block}.cross', config))
        moe = f'{block}.moe'
        specs[f'{moe}.norm.scale'] = ParamSpec((d,), 'ones')
        specs[f'{moe}.router.w'] = ParamSpec((d, config.n_experts), 'xavier')
        specs[f'{moe}.shared_gate.w'] = ParamSpec((d, 1), 'xavier')
        specs.update(
            _expert_specs(config.shared_expert, f'{moe}.shared', config)
        )
        for i in range(config.n_experts):
            specs.update(
                _expert_specs(
                    config.routed_expert, f'{moe}.experts.{i}', config, i
                )
            )

    specs['head.norm.scale'] = ParamSpec((d,), 'ones')
    if config.head == 'conv':
        specs.update(
            {
                'head.proj.w': ParamSpec((d, d), 'xavier'),
                'head.unpatch.w': ParamSpec((d, d, p), 'xavier'),
                'head.dwconv.w': ParamSpec(
                    (d, config.decoder_kernel), 'xavier'
                ),
                'head.gnorm.scale': ParamSpec((d,), 'ones'),
                'head.pw1.w': ParamSpec((d // 4, d), 'xavier'),
                'head.pw2.w': ParamSpec((1, d // 4), 'xavier'),
            }
        )
    else:
        specs.update(
            {
                'head.fc1.w': ParamSpec((config.n_patches * d, d), 'xavier'),
                'head.fc2.w': ParamSpec((d, config.horizon_out), 'xavier'),
            }
        )
    return specs


def _fans(name: str, shape: tuple[int, ...]) -> tuple[int, int]:
    if name.endswith('.dw') or name == 'head.dwconv.w':
        # depthwise (C, k): one input channel per group
        return shape[1], shape[1]
    if name == 'head.unpatch.w':
        c_in, c_out, width = shape
        return c_out * width, c_in * width
    if '.pw' in name:
        # pointwise (C_out, C_in)
        return shape[1], shape[0]
    return shape[0], shape[1]


def init_params(
    config: ModelConfig, seed: int, dtype=None
) -> ModelParams:
    """
    Fourier-layer weights from a standard normal, norm scales at one,
    biases at zero, everything else Xavier-uniform; drawn from the ``init``
    stream of ``seed``.
    """
    dtype = dtype or get_default_dtype()
    rng = make_generator(seed, 'init')
    tensors: dict[str, Tensor] = {}
    for name, spec in param_specs(config).items():
        if spec.init == 'xavier':
            fan_in, fan_out = _fans(name, spec.shape)
            tensors[name] = xavier_uniform(
                spec.shape, rng, fan_in, fan_out, dtype=dtype, name=name
            )
        elif spec.init == 'normal':
            tensors[name] = normal_fill(
                spec.shape, rng, dtype=dtype, name=name
            )
        else:
            value = 1.0 if spec.init == 'ones' else 0.0
            tensors[name] = constant_fill(
                spec.shape, value, dtype=dtype, name=name
            )
    params = ModelParams(tensors)
    logger.debug(
        f'Initialized {len(params)} tensors, {params.n_elements} values'
    )
    return params


def count_parameters(config: ModelConfig) -> tuple[int, int]:
    """
    ``(activated, total)`` learnable values; activated counts ``K`` of the
    ``N`` routed experts per layer.
    """
    specs = param_specs(config)
    total = sum(int(np.prod(s.shape)) for s in specs.values())
    per_expert = sum(
        int(np.prod(s.shape)) for s in specs.values() if s.expert == 0
    ) // config.n_blocks
    idle = (config.n_experts - config.top_k) * per_expert * config.n_blocks
    return total - idle, total


def decays(name: str) -> bool:
    """Norm scales, biases and router weights are exempt from weight decay."""
    tail = name.rsplit('.', 1)[-1]
    return not (
        tail == 'scale' or tail.startswith('b') or name.endswith('router.w')
    )


def model_forward(
    x: np.ndarray,
    z: Optional[np.ndarray],
    config: ModelConfig,
    params: ModelParams,
    ctx: Optional[ForwardContext] = None,
) -> tuple[Tensor, list[RouterAssignment]]:
    """
    Normalized windows ``x (B, D, L)`` and covariates ``z (B, C, L)`` to
    normalized predictions ``(B, D, H_o)`` plus one router assignment per
    block.
    """
    ctx = ctx or ForwardContext()
    ctx.assignments = []
    dtype = params.dtype
    batch, n_var, length = x.shape
    if length != config.lookback:
        raise ConfigurationError(
            f'Window length {length} does not match lookback '
            f'{config.lookback}',
            key='lookback',
        )
    rows = batch * n_var

    patches = patchify(np.asarray(x, dtype=dtype), config.patch)
    patches = Tensor(patches.reshape(rows, config.n_patches, config.patch))
    h = patch_embed(patches, params['embed.w'], config.norm_scheme)

    kv_tokens = None
    if config.covariates_active:
        if n_var != config.n_variates:
            raise ConfigurationError(
                f'Model fuses {config.n_variates} variates, data has {n_var}',
                key='n_variates',
            )
        if z is None or z.shape[1] != config.n_covariates:
            raise ConfigurationError(
                f'Model expects {config.n_covariates} covariates',
                key='n_covariates',
            )
        fused = fuse_covariates(
            Tensor(x, dtype=dtype), Tensor(z, dtype=dtype), params
        )
        fused = patchify_tensor(fused.reshape(rows, length), config.patch)
        kv_tokens = patch_embed(
            fused, params['kv_embed.w'], config.norm_scheme
        )

    for b in range(config.n_blocks):
        rate = config.drop_path_rate(b)
        block = f'blocks.{b}'
        h = self_attention_block(
            h, params, f'{block}.attn', config, ctx, rate
        )
        if kv_tokens is not None:
            h = cross_attention_block(
                h, kv_tokens, params, f'{block}.cross', config, ctx, rate
            )
        h, _ = mohe_forward(h, params, f'{block}.moe', config, ctx, rate)

    pred = patch_decode(h, params, config)
    return pred.reshape(batch, n_var, config.horizon_out), ctx.assignments


def predict(
    x: np.ndarray,
    z: Optional[np.ndarray],
    stats: NormStats,
    config: ModelConfig,
    params: ModelParams,
) -> np.ndarray:
    """Inference-mode forecast on the original scale, ``(B, D, H_o)``."""
    pred, _ = model_forward(x, z, config, params, ForwardContext())
    return instance_denormalize(pred.data.astype(np.float64), stats)
