"""CSV tables and SVG plots for metrics and forecasts."""

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from src.inference.schemas import (  # noqa: E402
    METRIC_COLUMNS,
    ForecastResult,
    MetricTable,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _write_with_manifest(
    df: pd.DataFrame, path: PathLike, manifest: Optional[PathLike]
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as fh:
        if manifest is not None:
            fh.write(f'# manifest: {manifest}\n')
        df.to_csv(fh, index=False)
    return path


def write_metrics_csv(
    table: MetricTable,
    path: PathLike,
    manifest: Optional[PathLike] = None,
) -> Path:
    df = pd.DataFrame(
        [row.as_dict() for row in table.rows], columns=METRIC_COLUMNS
    )
    return _write_with_manifest(df, path, manifest)


def write_table_csv(
    records: Sequence[dict],
    path: PathLike,
    manifest: Optional[PathLike] = None,
) -> Path:
    """Generic comparison table (ablations, sweeps)."""
    return _write_with_manifest(pd.DataFrame(list(records)), path, manifest)


def read_csv_skipping_manifest(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, comment='#')


def write_forecast_csv(
    result: ForecastResult,
    timestamps: pd.DatetimeIndex,
    names: Sequence[str],
    path: PathLike,
    manifest: Optional[PathLike] = None,
) -> Path:
    """Long format: ``timestamp, variate, [y_true,] y_pred``."""
    horizon = result.horizon
    stamps = pd.DatetimeIndex(timestamps)[:horizon]
    columns = {
        'timestamp': np.tile(
            stamps.strftime('%Y-%m-%d %H:%M:%S'), len(names)
        ),
        'variate': np.repeat(list(names), horizon),
    }
    if result.ground_truth is not None:
        truth = result.ground_truth
        padded = np.full(result.predictions.shape, np.nan)
        padded[:, : truth.shape[-1]] = truth
        columns['y_true'] = padded.reshape(-1)
    columns['y_pred'] = result.predictions.reshape(-1)
    return _write_with_manifest(pd.DataFrame(columns), path, manifest)


def plot_forecast_svg(
    result: ForecastResult,
    names: Sequence[str],
    out_dir: PathLike,
    history: Optional[np.ndarray] = None,
) -> list[Path]:
    """One SVG per variate: optional history, truth and prediction."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    horizon = result.horizon
    for d, name in enumerate(names):
        fig, ax = plt.subplots(figsize=(8, 3))
        offset = 0
        if history is not None:
            offset = history.shape[-1]
            ax.plot(
                np.arange(offset),
                history[d],
                color='gray',
                lw=0.8,
                label='history',
            )
        steps = offset + np.arange(horizon)
        if result.ground_truth is not None:
            truth = result.ground_truth[d]
            ax.plot(steps[: truth.shape[-1]], truth, label='truth')
        ax.plot(steps, result.predictions[d], label='forecast')
        ax.set_title(str(name))
        ax.legend(loc='upper left', fontsize='small')
        fig.tight_layout()
        path = out_dir / f'forecast_{d:03d}_{_safe(name)}.svg'
        fig.savefig(path, format='svg')
        plt.close(fig)
        paths.append(path)
    logger.debug(f'Wrote {len(paths)} plots to {out_dir}')
    return paths


def _safe(name: str) -> str:
    return ''.join(c if c.isalnum() or c in '-_' else '_' for c in str(name))
