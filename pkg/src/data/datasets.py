"""
Benchmark registry, synthetic series, CSV export and batch iteration.
"""

import logging
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np
import orjson
import pandas as pd

from src.data.schemas import (
    CovariateSpec,
    DatasetInfo,
    Segment,
    SplitSpec,
    TimeSeriesFrame,
    WindowBatch,
)
from src.data.service import make_windows, window_starts

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 32


def _ett(name: str, hourly: bool) -> DatasetInfo:
    if hourly:
        return DatasetInfo(
            name=name,
            n_variates=7,
            split=SplitSpec(train=8545, val=2881, test=2881),
            freq='1h',
            preset='tiny',
            patch=8,
            max_lr=3.2e-3,
            batch_size=128,
            epochs=30,
        )
    return DatasetInfo(
        name=name,
        n_variates=7,
        split=SplitSpec(train=34465, val=11521, test=11521),
        freq='15min',
        preset='base',
        patch=16,
        max_lr=3.2e-3,
        batch_size=128,
        epochs=20,
    )


DATASETS: dict[str, DatasetInfo] = {
    'etth1': _ett('ETTh1', hourly=True),
    'etth2': _ett('ETTh2', hourly=True),
    'ettm1': _ett('ETTm1', hourly=False),
    'ettm2': _ett('ETTm2', hourly=False),
    'weather': DatasetInfo(
        name='Weather',
        n_variates=21,
        split=SplitSpec(train=36792, val=5271, test=10540),
        freq='10min',
        preset='large',
        patch=16,
        max_lr=3.2e-3,
        batch_size=64,
        epochs=30,
    ),
    'ecl': DatasetInfo(
        name='ECL',
        n_variates=321,
        split=SplitSpec(train=18317, val=2633, test=5261),
        freq='1h',
        preset='large',
        patch=12,
        max_lr=2.2e-3,
        batch_size=8,
        epochs=10,
    ),
    'traffic': DatasetInfo(
        name='Traffic',
        n_variates=862,
        split=SplitSpec(train=12185, val=1757, test=3509),
        freq='1h',
        preset='base',
        patch=12,
        max_lr=2.2e-3,
        batch_size=6,
        epochs=15,
    ),
}

ALIASES = {'electricity': 'ecl'}


def get_dataset_info(name_or_path: Union[str, Path]) -> Optional[DatasetInfo]:
    """Look a benchmark up by name or by a file path's stem."""
    key = Path(str(name_or_path)).stem.lower()
    key = ALIASES.get(key, key)
    return DATASETS.get(key)


def split_for(frame: TimeSeriesFrame, dataset: Optional[str]) -> SplitSpec:
    """
    The registered split when it fits the series, else 70/10/20.
    """
    info = get_dataset_info(dataset) if dataset else None
    if info is not None and info.split.total <= frame.length:
        return info.split
    if info is not None:
        logger.warning(
            f'{info.name} split needs {info.split.total} points, series has '
            f'{frame.length}; using 70/10/20'
        )
    return SplitSpec.proportional(frame.length)


def seasonal_period(freq: pd.Timedelta) -> int:
    """Points per day; 24 for hourly data."""
    return max(1, int(pd.Timedelta(days=1) / freq))


def synthetic_multisine(
    n_points: int,
    n_variates: int = 3,
    periods: Sequence[float] = (24.0, 12.0),
    noise: float = 0.05,
    seed: int = 0,
    start: str = '2018-01-01',
    freq: str = '1h',
) -> TimeSeriesFrame:
    """
    Sum of sinusoids with seeded phases and amplitudes plus Gaussian noise.

    Each variate gets its own level, phases and amplitudes.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n_points, dtype=np.float64)
    values = np.empty((n_variates, n_points))
    for d in range(n_variates):
        level = rng.uniform(-1.0, 1.0)
        series = np.full(n_points, level)
        for period in periods:
            amplitude = rng.uniform(0.5, 1.5)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            series += amplitude * np.sin(2.0 * np.pi * t / period + phase)
        if noise > 0:
            series += noise * rng.standard_normal(n_points)
        values[d] = series
    timestamps = pd.date_range(start, periods=n_points, freq=freq)
    return TimeSeriesFrame(
        names=[f'var{d}' for d in range(n_variates)],
        values=values,
        timestamps=timestamps,
        freq=pd.Timedelta(freq),
    )


def write_csv(frame: TimeSeriesFrame, path: Union[str, Path]) -> Path:
    """Write ``frame`` in ETT format (``date`` first)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(frame.values.T, columns=frame.names)
    df.insert(0, 'date', frame.timestamps.strftime('%Y-%m-%d %H:%M:%S'))
    df.to_csv(path, index=False)
    return path


def write_split_manifest(
    path: Union[str, Path],
    dataset: str,
    spec: SplitSpec,
    lookback: int,
    horizon: int,
    seed: int,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        'dataset': dataset,
        'lengths': spec.model_dump(),
        'L': lookback,
        'H_o': horizon,
        'seed': seed,
    }
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_INDENT_2))
    return path


def iterate_batches(
    segment: Segment,
    lookback: int,
    horizon: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    covariates: Optional[CovariateSpec] = None,
    rng: Optional[np.random.Generator] = None,
    stride: int = 1,
) -> Iterator[WindowBatch]:
    """
    Yield batches of ``batch_size`` windows.

    Windows are shuffled with ``rng`` when given, else emitted in time
    order. All variates of one window stay together because covariate
    fusion mixes variates.
    """
    starts = window_starts(segment, lookback, horizon, stride)
    if rng is not None:
        starts = rng.permutation(starts)
    for i in range(0, len(starts), batch_size):
        yield make_windows(
            segment,
            lookback,
            horizon,
            covariates=covariates,
            starts=starts[i:i + batch_size],
        )
