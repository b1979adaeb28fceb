from dataclasses import dataclass, field
from typing import Literal, Optional, Union

import numpy as np

NormalizationMode = Literal['per_chunk', 'per_window']

METRIC_COLUMNS = [
    'dataset',
    'horizon',
    'mse',
    'mae',
    'model',
    'seed',
    'windows',
    'normalization',
    'note',
]


@dataclass
class ForecastResult:
    """
    A rolled-out forecast ``(D, H)`` with optional ground truth and metrics.
    """

    predictions: np.ndarray
    iterations: int
    wall_clock: float = 0.0
    ground_truth: Optional[np.ndarray] = None
    mse: Optional[float] = None
    mae: Optional[float] = None
    # per-step metrics averaged over variates, (H,)
    mse_by_step: Optional[np.ndarray] = None
    mae_by_step: Optional[np.ndarray] = None
    normalization: NormalizationMode = 'per_chunk'

    @property
    def horizon(self) -> int:
        return self.predictions.shape[-1]

    @property
    def has_metrics(self) -> bool:
        return self.ground_truth is not None


@dataclass
class MetricRow:
    dataset: str
    horizon: Union[int, str]
    mse: float
    mae: float
    model: str
    seed: int
    windows: int = 0
    normalization: str = 'per_chunk'
    note: str = ''

    def as_dict(self) -> dict:
        return {column: getattr(self, column) for column in METRIC_COLUMNS}


@dataclass
class MetricTable:
    rows: list[MetricRow] = field(default_factory=list)

    def add_average(self, dataset: str, model: str, seed: int) -> MetricRow:
        """Append the mean over evaluated (non-skipped) horizons."""
        evaluated = [
            r for r in self.rows
            if r.model == model and r.horizon != 'avg' and not r.note
        ]
        row = MetricRow(
            dataset=dataset,
            horizon='avg',
            mse=float(np.mean([r.mse for r in evaluated]))
            if evaluated else float('nan'),
            mae=float(np.mean([r.mae for r in evaluated]))
            if evaluated else float('nan'),
            model=model,
            seed=seed,
            windows=sum(r.windows for r in evaluated),
            normalization=evaluated[0].normalization if evaluated else '',
            note='' if evaluated else 'no horizon evaluated',
        )
        self.rows.append(row)
        return row

    def extend(self, other: 'MetricTable') -> None:
        self.rows.extend(other.rows)

    def get(self, model: str, horizon: Union[int, str]) -> MetricRow:
        for row in self.rows:
            if row.model == model and row.horizon == horizon:
                return row
        raise KeyError((model, horizon))
