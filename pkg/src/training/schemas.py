from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import Field, model_validator

from src.common.exceptions import ConfigurationError
from src.common.schemas import BaseSchema, parse_schema
from src.data.datasets import DEFAULT_BATCH_SIZE
from src.data.schemas import DatasetInfo
from src.model.network import ModelParams


class TrainConfig(BaseSchema):
    """Optimizer, schedule and stopping settings."""

    max_lr: float = Field(default=3.2e-3, gt=0.0)
    min_lr: float = Field(default=1.2e-4, gt=0.0)
    weight_decay: float = Field(default=1e-4, ge=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.95, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    warmup_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    epochs: int = Field(default=10, ge=1)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=1)
    huber_delta: float = Field(default=2.0, gt=0.0)
    balance_alpha: float = Field(default=0.02, ge=0.0)
    balance_reduction: Literal['mean', 'sum'] = 'mean'
    patience: int = Field(default=5, ge=1)
    seed: int = 2021

    # Global-norm gradient clipping; None disables
    clip_norm: Optional[float] = Field(default=1.0, gt=0.0)
    max_steps: Optional[int] = Field(default=None, ge=1)
    train_stride: int = Field(default=1, ge=1)
    # Defaults to H_o
    eval_stride: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode='after')
    def check_lr(self) -> 'TrainConfig':
        if self.min_lr > self.max_lr:
            raise ConfigurationError(
                'min_lr must not exceed max_lr', key='min_lr'
            )
        return self

    def updated(self, **changes: Any) -> 'TrainConfig':
        return parse_schema(TrainConfig, {**self.model_dump(), **changes})

    @classmethod
    def for_dataset(
        cls, info: Optional[DatasetInfo], **overrides: Any
    ) -> 'TrainConfig':
        """Registered per-dataset settings, then ``overrides``."""
        base: dict[str, Any] = {}
        if info is not None:
            base = {
                'max_lr': info.max_lr,
                'min_lr': info.min_lr,
                'batch_size': info.batch_size,
                'epochs': info.epochs,
            }
        return parse_schema(cls, {**base, **overrides})


@dataclass
class TrainState:
    """
    Optimizer moments, stopping bookkeeping and generator states.

    ``rng_states`` holds the ``bit_generator.state`` of the ``data`` and
    ``dropout`` streams as of the end of ``epoch``, so passing the state
    back to ``train`` continues the same run.
    """

    step: int = 0
    epoch: int = 0
    first_moments: dict[str, np.ndarray] = field(default_factory=dict)
    second_moments: dict[str, np.ndarray] = field(default_factory=dict)
    best_val_mse: float = float('inf')
    epochs_since_improvement: int = 0
    rng_states: dict[str, dict[str, Any]] = field(default_factory=dict)


@dataclass
class EpochRecord:
    epoch: int
    # Huber + alpha * balance
    train_loss: float
    val_mse: Optional[float]
    lr: float
    steps: int
    train_huber: float = float('nan')


@dataclass
class TrainResult:
    params: ModelParams
    state: TrainState
    history: list[EpochRecord]
    utilization: list[list[float]]
    stopped_early: bool = False
    checkpoint: Optional[Path] = None

    @property
    def final_loss(self) -> float:
        return self.history[-1].train_loss if self.history else float('nan')
