"""
Ingestion, splitting, windowing and per-window normalization.

All functions are pure: they never mutate the frames or segments passed in.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from src.common.config import get_settings
from src.common.exceptions import ConfigurationError, DataError
from src.data.schemas import (
    NORM_EPS,
    CovariateSpec,
    NormStats,
    Segment,
    SplitSegments,
    SplitSpec,
    TimeSeriesFrame,
    WindowBatch,
)

logger = logging.getLogger(__name__)


def load_csv(
    path: Union[str, Path], timestamp_column: str = 'date'
) -> TimeSeriesFrame:
    """
    Read an ETT-format CSV: a timestamp column followed by numeric columns.

    Relative paths missing from the working directory are looked up under
    MOHETS_DATA_DIR.

    Raises:
        DataError: missing file, unparsable cells, non-finite values or an
            irregular time grid.
    """
    path = Path(path)
    if not path.is_file() and not path.is_absolute():
        candidate = Path(get_settings().MOHETS_DATA_DIR) / path
        if candidate.is_file():
            path = candidate
    if not path.is_file():
        raise DataError(f'Data file not found: {path}', path=str(path))
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f'Cannot parse {path}: {e}', path=str(path)) from e

    if timestamp_column not in raw.columns:
        raise DataError(
            f'Missing timestamp column {timestamp_column!r}', path=str(path)
        )
    names = [c for c in raw.columns if c != timestamp_column]
    if not names:
        raise DataError('No value columns', path=str(path))
    if len(raw) < 2:
        raise DataError(
            'Need at least two rows to infer spacing', path=str(path)
        )

    timestamps = pd.to_datetime(raw[timestamp_column], errors='coerce')
    if timestamps.isna().any():
        row = int(np.flatnonzero(timestamps.isna().to_numpy())[0])
        raise DataError(
            'Unparsable timestamp',
            path=str(path),
            row=row,
            value=raw[timestamp_column].iloc[row],
        )

    values = np.empty((len(names), len(raw)), dtype=np.float64)
    for i, name in enumerate(names):
        column = pd.to_numeric(raw[name], errors='coerce').to_numpy(
            dtype=np.float64
        )
        bad = ~np.isfinite(column)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DataError(
                'Unparsable or non-finite value',
                path=str(path),
                row=row,
                column=name,
                value=raw[name].iloc[row],
            )
        values[i] = column

    index = pd.DatetimeIndex(timestamps)
    freq = index[1] - index[0]
    if freq <= pd.Timedelta(0):
        raise DataError('Timestamps must increase', path=str(path), row=1)
    gaps = np.flatnonzero(np.diff(index.asi8) != freq.value)
    if gaps.size:
        row = int(gaps[0]) + 1
        raise DataError(
            f'Irregular spacing at row {row}: expected {freq}, got '
            f'{index[row] - index[row - 1]}',
            path=str(path),
            row=row,
        )

    logger.info(
        f'Loaded {path.name}: {len(names)} variates x {len(raw)} points, '
        f'freq {freq}'
    )
    return TimeSeriesFrame(
        names=names, values=values, timestamps=index, freq=freq
    )


def chronological_split(
    frame: TimeSeriesFrame, spec: SplitSpec, context: int = 0
) -> SplitSegments:
    """
    Cut ``frame`` into train, val and test, in that order.

    Segments end at the last observation; points before ``T - total`` are
    unused. Val and test are extended leftward by up to ``context`` points
    from the preceding segment (for window inputs only).
    """
    if spec.total > frame.length:
        raise DataError(
            f'Split needs {spec.total} points but the series has '
            f'{frame.length}',
            total=spec.total,
        )
    start = frame.length - spec.total
    bounds = [
        ('train', start, start + spec.train),
        ('val', start + spec.train, start + spec.train + spec.val),
        ('test', start + spec.train + spec.val, frame.length),
    ]
    segments = []
    for name, lo, hi in bounds:
        ctx = 0 if name == 'train' else min(context, lo - start)
        segments.append(
            Segment(
                name=name,
                values=frame.values[:, lo - ctx:hi],
                timestamps=frame.timestamps[lo - ctx:hi],
                context=ctx,
                offset=lo - ctx,
            )
        )
    return SplitSegments(*segments)


def window_starts(
    segment: Segment, lookback: int, horizon: int, stride: int = 1
) -> np.ndarray:
    """
    Start offsets of every window whose targets lie in the segment's own
    points.
    """
    if stride < 1:
        raise ConfigurationError('stride must be >= 1', key='stride')
    first = max(0, segment.context - lookback)
    required = first + lookback + horizon
    if segment.length < required:
        raise DataError(
            f'Segment {segment.name!r} has {segment.length} points; windows '
            f'need at least {required} (L={lookback}, H_o={horizon})',
            required=required,
        )
    last = segment.length - lookback - horizon
    return np.arange(first, last + 1, stride)


def instance_normalize(
    x: np.ndarray, axis: int = -1
) -> tuple[np.ndarray, NormStats]:
    """``(x - mean) / (std + eps)`` over ``axis``; stats keep that axis."""
    mean = x.mean(axis=axis, keepdims=True)
    std = x.std(axis=axis, keepdims=True)
    return (x - mean) / (std + NORM_EPS), NormStats(mean=mean, std=std)


def instance_denormalize(pred: np.ndarray, stats: NormStats) -> np.ndarray:
    return pred * (stats.std + NORM_EPS) + stats.mean


def calendar_covariates(
    timestamps: pd.DatetimeIndex, spec: CovariateSpec
) -> np.ndarray:
    """
    Calendar features as a ``(C, n)`` array, each mapped affinely onto
    ``[-0.5, 0.5]``. Monday is day 0.
    """
    ts = pd.DatetimeIndex(timestamps)
    columns = {
        'minute_of_hour': ts.minute / 59.0,
        'hour_of_day': ts.hour / 23.0,
        'day_of_week': ts.dayofweek / 6.0,
        'day_of_month': (ts.day - 1) / 30.0,
        'day_of_year': (ts.dayofyear - 1) / 365.0,
        'month_of_year': (ts.month - 1) / 11.0,
    }
    if not spec.components:
        return np.zeros((0, len(ts)))
    return np.stack([
        np.asarray(columns[c], dtype=np.float64) - 0.5
        for c in spec.components
    ])


def make_windows(
    segment: Segment,
    lookback: int,
    horizon: int,
    stride: int = 1,
    covariates: Optional[CovariateSpec] = None,
    starts: Optional[np.ndarray] = None,
) -> WindowBatch:
    """
    Materialize the windows at ``starts`` (all valid starts by default).

    Inputs are instance-normalized per window and variate; targets stay raw.
    """
    if starts is None:
        starts = window_starts(segment, lookback, horizon, stride)
    starts = np.asarray(starts, dtype=np.intp)
    covariates = covariates or CovariateSpec.disabled()

    offsets = np.arange(lookback)
    target_offsets = lookback + np.arange(horizon)
    # (W, D, L) and (W, D, H_o) via fancy indexing on the time axis
    inputs = segment.values[:, starts[:, None] + offsets].transpose(1, 0, 2)
    targets = segment.values[:, starts[:, None] + target_offsets].transpose(
        1, 0, 2
    )
    normalized, stats = instance_normalize(inputs)

    calendar = calendar_covariates(segment.timestamps, covariates)
    cov = calendar[:, starts[:, None] + offsets].transpose(1, 0, 2)
    return WindowBatch(
        inputs=normalized,
        targets=targets,
        covariates=cov,
        stats=stats,
        starts=starts,
    )


def patchify(series: np.ndarray, patch: int) -> np.ndarray:
    """
    ``(..., L)`` to ``(..., ceil(L / P), P)`` non-overlapping patches.

    When ``P`` does not divide ``L`` the last patch is right-padded by
    repeating the final observation.
    """
    length = series.shape[-1]
    if patch < 1 or patch > length:
        raise ConfigurationError(
            f'Patch length must be in [1, {length}], got {patch}',
            key='patch',
        )
    n_patches = -(-length // patch)
    pad = n_patches * patch - length
    if pad:
        tail = np.repeat(series[..., -1:], pad, axis=-1)
        series = np.concatenate([series, tail], axis=-1)
    return series.reshape(series.shape[:-1] + (n_patches, patch))
