from dataclasses import dataclass
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import Field, model_validator

from src.common.exceptions import ConfigurationError
from src.common.schemas import BaseSchema

CalendarComponent = Literal[
    'minute_of_hour',
    'hour_of_day',
    'day_of_week',
    'day_of_month',
    'day_of_year',
    'month_of_year',
]

NORM_EPS = 1e-5

DAILY_COMPONENTS: tuple[CalendarComponent, ...] = (
    'hour_of_day',
    'day_of_week',
    'day_of_month',
    'day_of_year',
    'month_of_year',
)


@dataclass
class TimeSeriesFrame:
    """Multivariate series: ``values`` is ``(D, T)`` on a fixed time grid."""

    names: list[str]
    values: np.ndarray
    timestamps: pd.DatetimeIndex
    freq: pd.Timedelta

    @property
    def n_variates(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def future_timestamps(self, n: int) -> pd.DatetimeIndex:
        """The ``n`` grid instants following the last observation."""
        return pd.date_range(
            self.timestamps[-1] + self.freq, periods=n, freq=self.freq
        )


@dataclass
class Segment:
    """
    A contiguous slice of a frame.

    The first ``context`` points belong to the preceding split; they may feed
    window inputs but never targets.
    """

    name: str
    values: np.ndarray
    timestamps: pd.DatetimeIndex
    context: int = 0
    offset: int = 0

    @property
    def length(self) -> int:
        return self.values.shape[1]

    @property
    def own_length(self) -> int:
        return self.length - self.context


@dataclass
class SplitSegments:
    train: Segment
    val: Segment
    test: Segment

    def __iter__(self):
        return iter((self.train, self.val, self.test))


class SplitSpec(BaseSchema):
    """Train/val/test lengths in time points."""

    train: int = Field(ge=1)
    val: int = Field(ge=0)
    test: int = Field(ge=0)

    @property
    def total(self) -> int:
        return self.train + self.val + self.test

    @classmethod
    def proportional(
        cls, length: int, ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    ) -> 'SplitSpec':
        train = int(length * ratios[0])
        test = int(length * ratios[2])
        return cls(train=train, val=length - train - test, test=test)


class CovariateSpec(BaseSchema):
    components: list[CalendarComponent] = Field(
        default_factory=lambda: list(DAILY_COMPONENTS)
    )

    @model_validator(mode='after')
    def check_unique(self) -> 'CovariateSpec':
        if len(set(self.components)) != len(self.components):
            raise ConfigurationError(
                'Covariate components must be unique', key='components'
            )
        return self

    @property
    def n_components(self) -> int:
        return len(self.components)

    @classmethod
    def for_frequency(cls, freq: pd.Timedelta) -> 'CovariateSpec':
        """Sub-hourly data also gets minute-of-hour."""
        if freq < pd.Timedelta(hours=1):
            return cls(components=['minute_of_hour', *DAILY_COMPONENTS])
        return cls()

    @classmethod
    def disabled(cls) -> 'CovariateSpec':
        return cls(components=[])


@dataclass
class NormStats:
    """Per-window, per-variate instance statistics (keepdims on time)."""

    mean: np.ndarray
    std: np.ndarray


@dataclass
class WindowBatch:
    """
    Aligned look-back windows.

    ``inputs`` are instance-normalized ``(W, D, L)``; ``targets`` are the raw
    ``(W, D, H_o)`` continuations; ``covariates`` are ``(W, C, L)``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    covariates: np.ndarray
    stats: NormStats
    starts: np.ndarray

    @property
    def n_windows(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_rows(self) -> int:
        """Rows after flattening variates into the batch axis."""
        return self.inputs.shape[0] * self.inputs.shape[1]

    @property
    def normalized_targets(self) -> np.ndarray:
        return (self.targets - self.stats.mean) / (
            self.stats.std + NORM_EPS
        )

    @property
    def variate_index(self) -> np.ndarray:
        """Variate of each flattened row."""
        return np.tile(np.arange(self.inputs.shape[1]), self.n_windows)

    def rows(self) -> np.ndarray:
        """Inputs as ``(W * D, L)`` channel-independent rows."""
        return self.inputs.reshape(self.n_rows, -1)


class DatasetInfo(BaseSchema):
    """Benchmark metadata and its recommended training settings."""

    name: str
    n_variates: int
    split: SplitSpec
    freq: str
    preset: Literal['tiny', 'small', 'base', 'large']
    patch: int
    horizon_out: int = 24
    max_lr: float
    min_lr: float = 1.2e-4
    batch_size: int
    epochs: int
