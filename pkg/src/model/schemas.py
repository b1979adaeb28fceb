from dataclasses import dataclass, field
from typing import Any, Literal, Optional

import numpy as np
from pydantic import Field, model_validator

from src.common.exceptions import ConfigurationError
from src.common.schemas import BaseSchema, parse_schema
from src.tensor.tensor import Tensor

SharedExpertKind = Literal['dwconv', 'conv', 'mlp', 'fa']
RoutedExpertKind = Literal['fa', 'mlp']
NormScheme = Literal['mixed', 'layernorm', 'rmsnorm']
HeadKind = Literal['conv', 'mlp']

PRESETS: dict[str, dict[str, int]] = {
    'tiny': dict(
        n_blocks=4, q_heads=4, kv_heads=2, n_experts=8, top_k=2,
        d_model=64, d_ff=128,
    ),
    'small': dict(
        n_blocks=4, q_heads=4, kv_heads=2, n_experts=8, top_k=2,
        d_model=128, d_ff=256,
    ),
    'base': dict(
        n_blocks=6, q_heads=8, kv_heads=4, n_experts=8, top_k=2,
        d_model=256, d_ff=512,
    ),
    'large': dict(
        n_blocks=8, q_heads=12, kv_heads=6, n_experts=8, top_k=2,
        d_model=384, d_ff=768,
    ),
}  # fmt: skip


class ModelConfig(BaseSchema):
    """Hyperparameters of one forecaster instance."""

    n_blocks: int = Field(default=4, ge=1)
    q_heads: int = Field(default=4, ge=1)
    kv_heads: int = Field(default=2, ge=1)
    n_experts: int = Field(default=8, ge=1)
    top_k: int = Field(default=2, ge=1)
    d_model: int = Field(default=64, ge=4)
    d_ff: Optional[int] = Field(default=None, ge=4)

    lookback: int = Field(default=672, ge=2)
    patch: int = Field(default=8, ge=1)
    horizon_out: int = Field(default=24, ge=1)

    rope_base: float = Field(default=10000.0, gt=1.0)
    dropout: float = Field(default=0.2, ge=0.0, lt=1.0)
    drop_path: float = Field(default=0.3, ge=0.0, lt=1.0)
    shared_kernel: int = Field(default=3, ge=1)
    decoder_kernel: int = Field(default=7, ge=1)

    shared_expert: SharedExpertKind = 'dwconv'
    routed_expert: RoutedExpertKind = 'fa'
    norm_scheme: NormScheme = 'mixed'
    head: HeadKind = 'conv'
    use_covariates: bool = True
    rope_on_cross: bool = True

    # Filled from the data before parameters are built
    n_variates: Optional[int] = Field(default=None, ge=1)
    n_covariates: Optional[int] = Field(default=None, ge=0)

    model_config = {
        **BaseSchema.model_config,
        'json_schema_extra': {
            'example': {
                'n_blocks': 4,
                'q_heads': 4,
                'kv_heads': 2,
                'n_experts': 8,
                'top_k': 2,
                'd_model': 64,
                'patch': 8,
                'horizon_out': 24,
            }
        },
    }

    @model_validator(mode='after')
    def check_structure(self) -> 'ModelConfig':
        if self.q_heads % self.kv_heads:
            raise ConfigurationError(
                'q_heads must be divisible by kv_heads', key='kv_heads'
            )
        if self.d_model % self.q_heads:
            raise ConfigurationError(
                'd_model must be divisible by q_heads', key='q_heads'
            )
        if (self.d_model // self.q_heads) % 2:
            raise ConfigurationError(
                'head dimension must be even for rotary pairs', key='d_model'
            )
        if self.top_k > self.n_experts:
            raise ConfigurationError(
                'top_k must not exceed n_experts', key='top_k'
            )
        if self.d_model % 4:
            raise ConfigurationError(
                'd_model must be divisible by 4', key='d_model'
            )
        if self.ffn_dim % 4:
            raise ConfigurationError(
                'd_ff must be divisible by 4', key='d_ff'
            )
        if self.patch > self.lookback:
            raise ConfigurationError(
                'patch must not exceed lookback', key='patch'
            )
        if self.n_out_patches > self.n_patches:
            raise ConfigurationError(
                'horizon_out needs more patches than the lookback provides',
                key='horizon_out',
            )
        for key in ('shared_kernel', 'decoder_kernel'):
            if getattr(self, key) % 2 == 0:
                raise ConfigurationError(f'{key} must be odd', key=key)
        return self

    @property
    def ffn_dim(self) -> int:
        return self.d_ff if self.d_ff is not None else 2 * self.d_model

    @property
    def head_dim(self) -> int:
        return self.d_model // self.q_heads

    @property
    def group_size(self) -> int:
        return self.q_heads // self.kv_heads

    @property
    def n_patches(self) -> int:
        return -(-self.lookback // self.patch)

    @property
    def n_out_patches(self) -> int:
        """Trailing tokens the conv head decodes; the last may overhang."""
        return -(-self.horizon_out // self.patch)

    @property
    def covariates_active(self) -> bool:
        return self.use_covariates and bool(self.n_covariates)

    def drop_path_rate(self, block: int) -> float:
        """Linear in depth: 0 at the first block, ``drop_path`` at the last."""
        if self.n_blocks == 1:
            return 0.0
        return self.drop_path * block / (self.n_blocks - 1)

    def updated(self, **changes: Any) -> 'ModelConfig':
        """A validated copy with ``changes`` applied."""
        return parse_schema(ModelConfig, {**self.model_dump(), **changes})

    @classmethod
    def from_preset(cls, name: str, **overrides: Any) -> 'ModelConfig':
        if name not in PRESETS:
            raise ConfigurationError(
                f'Unknown preset {name!r}; choose from {sorted(PRESETS)}',
                key='preset',
            )
        return parse_schema(cls, {**PRESETS[name], **overrides})


@dataclass
class RouterAssignment:
    """
    Routing outcome of one expert layer over ``T`` tokens.

    ``scores`` keeps the differentiable softmax so the balance loss can
    reach the router weights.
    """

    indices: np.ndarray
    gates: np.ndarray
    shared_gate: np.ndarray
    scores: Tensor
    top_k: int

    @property
    def n_experts(self) -> int:
        return self.gates.shape[-1]

    @property
    def n_tokens(self) -> int:
        return self.indices.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(
            self.indices.reshape(-1), minlength=self.n_experts
        )

    @property
    def fractions(self) -> np.ndarray:
        """f_i: share of the ``K * T`` selections that went to expert i."""
        return self.counts / (self.top_k * self.n_tokens)

    @property
    def mean_scores(self) -> np.ndarray:
        """r_i: average router probability of expert i."""
        return self.scores.data.reshape(-1, self.n_experts).mean(axis=0)


@dataclass
class ForwardContext:
    """Per-call flags and counters threaded through the network."""

    training: bool = False
    rng: Optional[np.random.Generator] = None
    dense: bool = False
    expert_evaluations: int = 0
    assignments: list[RouterAssignment] = field(default_factory=list)
    attention: list[np.ndarray] = field(default_factory=list)
    record_attention: bool = False
