"""
Autoregressive rollout, error metrics and the horizon evaluation protocol.
"""

import logging
import math
import time
from functools import partial
from typing import Optional, Sequence

import numpy as np

from src.common.exceptions import ConfigurationError, DataError
from src.data.schemas import NORM_EPS, CovariateSpec, NormStats, Segment
from src.data.service import (
    calendar_covariates,
    instance_normalize,
    window_starts,
)
from src.inference.schemas import (
    ForecastResult,
    MetricRow,
    MetricTable,
    NormalizationMode,
)
from src.model.network import ModelParams, model_forward
from src.model.schemas import ForwardContext, ModelConfig

logger = logging.getLogger(__name__)

DEFAULT_HORIZONS = (96, 192, 336, 720)
EVAL_BATCH = 64
DEFAULT_HORIZON_OUT: int = ModelConfig.model_fields['horizon_out'].default


def _check_shapes(y: np.ndarray, y_hat: np.ndarray) -> None:
    if np.shape(y) != np.shape(y_hat):
        raise ConfigurationError(
            'Metric inputs must have equal shapes',
            shapes=(np.shape(y), np.shape(y_hat)),
        )


def mse(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Mean over the horizon (last axis), then over variates and windows."""
    _check_shapes(y, y_hat)
    err = np.asarray(y, dtype=np.float64) - np.asarray(y_hat, dtype=np.float64)
    return float(np.mean(np.mean(err * err, axis=-1)))


def mae(y: np.ndarray, y_hat: np.ndarray) -> float:
    _check_shapes(y, y_hat)
    err = np.asarray(y, dtype=np.float64) - np.asarray(y_hat, dtype=np.float64)
    return float(np.mean(np.mean(np.abs(err), axis=-1)))


def n_iterations(horizon: int, horizon_out: int) -> int:
    return math.ceil(horizon / horizon_out)


def rollout_batch(
    config: ModelConfig,
    params: ModelParams,
    history: np.ndarray,
    horizon: int,
    covariates: Optional[np.ndarray] = None,
    normalization: NormalizationMode = 'per_chunk',
) -> tuple[np.ndarray, int]:
    """
    Roll raw windows ``(W, D, L)`` forward ``horizon`` steps in chunks of
    ``H_o``.

    ``covariates`` are ``(W, C, L + horizon)``: the calendar values from the
    first input step through the last forecast step. Each chunk sees the
    covariates of its own look-back window.

    Returns:
        ``(W, D, horizon)`` forecasts on the original scale and the number of
        chunks.
    """
    lookback, chunk = config.lookback, config.horizon_out
    if history.shape[-1] != lookback:
        raise DataError(
            f'Rollout needs exactly L={lookback} history points, got '
            f'{history.shape[-1]}',
            required=lookback,
        )
    iterations = n_iterations(horizon, chunk)
    if config.covariates_active:
        if covariates is None or covariates.shape[-1] < lookback + horizon:
            available = 0 if covariates is None else covariates.shape[-1]
            raise DataError(
                f'Covariate source covers {available} steps; rollout needs '
                f'{lookback + horizon}',
                required=lookback + horizon,
            )

    buffer = np.asarray(history, dtype=np.float64)
    frozen: Optional[NormStats] = None
    if normalization == 'per_window':
        _, frozen = instance_normalize(buffer)
    chunks = []
    for i in range(iterations):
        if frozen is None:
            normalized, stats = instance_normalize(buffer)
        else:
            stats = frozen
            normalized = (buffer - stats.mean) / (stats.std + NORM_EPS)
        z = None
        if config.covariates_active:
            start = i * chunk
            z = covariates[..., start:start + lookback]
        pred, _ = model_forward(
            normalized, z, config, params, ForwardContext()
        )
        out = pred.data.astype(np.float64) * (stats.std + NORM_EPS)
        out = out + stats.mean
        chunks.append(out)
        buffer = np.concatenate([buffer, out], axis=-1)[..., chunk:]
    forecast = np.concatenate(chunks, axis=-1)[..., :horizon]
    return forecast, iterations


def rollout(
    config: ModelConfig,
    params: ModelParams,
    history: np.ndarray,
    horizon: int,
    covariates: Optional[np.ndarray] = None,
    ground_truth: Optional[np.ndarray] = None,
    normalization: NormalizationMode = 'per_chunk',
) -> ForecastResult:
    """Forecast one ``(D, L)`` window ``horizon`` steps ahead."""
    start = time.perf_counter()
    z = None if covariates is None else covariates[None]
    forecast, iterations = rollout_batch(
        config, params, history[None], horizon, z, normalization
    )
    result = ForecastResult(
        predictions=forecast[0],
        iterations=iterations,
        wall_clock=time.perf_counter() - start,
        normalization=normalization,
    )
    if ground_truth is not None:
        truth = np.asarray(ground_truth, dtype=np.float64)[..., :horizon]
        preds = result.predictions[..., : truth.shape[-1]]
        result.ground_truth = truth
        result.mse = mse(truth, preds)
        result.mae = mae(truth, preds)
        result.mse_by_step = np.mean((truth - preds) ** 2, axis=0)
        result.mae_by_step = np.mean(np.abs(truth - preds), axis=0)
    return result


def fit_scaler(segment: Segment) -> NormStats:
    """Per-variate mean and std over the segment's own points."""
    own = segment.values[:, segment.context:]
    return NormStats(
        mean=own.mean(axis=-1, keepdims=True),
        std=own.std(axis=-1, keepdims=True),
    )


def _scale(values: np.ndarray, scaler: Optional[NormStats]) -> np.ndarray:
    if scaler is None:
        return values
    return (values - scaler.mean) / np.where(scaler.std > 0, scaler.std, 1.0)


def _gather(
    segment: Segment, starts: np.ndarray, offset: int, width: int
) -> np.ndarray:
    """``(W, D, width)`` slices of the segment beginning at start + offset."""
    idx = starts[:, None] + offset + np.arange(width)
    return segment.values[:, idx].transpose(1, 0, 2)


def _skip_row(
    dataset: str, horizon: int, model: str, seed: int, reason: str
) -> MetricRow:
    logger.warning(f'Skipping horizon {horizon}: {reason}')
    return MetricRow(
        dataset=dataset,
        horizon=horizon,
        mse=float('nan'),
        mae=float('nan'),
        model=model,
        seed=seed,
        note=f'skipped: {reason}',
    )


def evaluate_horizons(
    config: ModelConfig,
    params: ModelParams,
    segment: Segment,
    covariates: CovariateSpec,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    stride: Optional[int] = None,
    scaler: Optional[NormStats] = None,
    normalization: NormalizationMode = 'per_chunk',
    dataset: str = 'data',
    model: str = 'mohets',
    seed: int = 0,
) -> MetricTable:
    """
    MSE/MAE per horizon over every aligned window of ``segment`` (stride
    ``H_o`` by default), plus the average row.

    Metrics are taken after applying ``scaler`` (the training split's
    per-variate standardization) to both truth and forecast.
    """
    stride = stride or config.horizon_out
    table = MetricTable()
    calendar = calendar_covariates(segment.timestamps, covariates)
    for horizon in horizons:
        try:
            starts = window_starts(segment, config.lookback, horizon, stride)
        except DataError as e:
            table.rows.append(
                _skip_row(dataset, horizon, model, seed, e.detail)
            )
            continue
        preds, truths = [], []
        for i in range(0, len(starts), EVAL_BATCH):
            batch = starts[i:i + EVAL_BATCH]
            history = _gather(segment, batch, 0, config.lookback)
            z = None
            if config.covariates_active:
                idx = batch[:, None] + np.arange(config.lookback + horizon)
                z = calendar[:, idx].transpose(1, 0, 2)
            forecast, _ = rollout_batch(
                config, params, history, horizon, z, normalization
            )
            preds.append(forecast)
            truths.append(_gather(segment, batch, config.lookback, horizon))
        pred = _scale(np.concatenate(preds), scaler)
        truth = _scale(np.concatenate(truths), scaler)
        table.rows.append(
            MetricRow(
                dataset=dataset,
                horizon=horizon,
                mse=mse(truth, pred),
                mae=mae(truth, pred),
                model=model,
                seed=seed,
                windows=len(starts),
                normalization=normalization,
            )
        )
        logger.info(
            f'{dataset} H={horizon}: mse {table.rows[-1].mse:.4f} '
            f'mae {table.rows[-1].mae:.4f} over {len(starts)} windows'
        )
    table.add_average(dataset, model, seed)
    return table


def repeat_last_forecast(history: np.ndarray, horizon: int) -> np.ndarray:
    return np.repeat(history[..., -1:], horizon, axis=-1)


def seasonal_naive_forecast(
    history: np.ndarray, horizon: int, period: int
) -> np.ndarray:
    """Tile the final ``period`` observations forward."""
    if period > history.shape[-1]:
        raise ConfigurationError(
            f'Seasonal period {period} exceeds history length',
            key='period',
        )
    season = history[..., -period:]
    reps = math.ceil(horizon / period)
    return np.concatenate([season] * reps, axis=-1)[..., :horizon]


def naive_baselines(
    segment: Segment,
    lookback: int,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    period: int = 24,
    stride: Optional[int] = None,
    scaler: Optional[NormStats] = None,
    dataset: str = 'data',
    seed: int = 0,
    horizon_out: int = DEFAULT_HORIZON_OUT,
) -> MetricTable:
    """
    Repeat-last-value and seasonal-naive tables on the same windows.

    ``stride`` defaults to ``horizon_out``, matching ``evaluate_horizons``.
    """
    stride = stride or horizon_out
    table = MetricTable()
    methods = {
        'repeat_last': repeat_last_forecast,
        'seasonal_naive': partial(seasonal_naive_forecast, period=period),
    }
    for name, method in methods.items():
        for horizon in horizons:
            try:
                starts = window_starts(segment, lookback, horizon, stride)
            except DataError as e:
                table.rows.append(
                    _skip_row(dataset, horizon, name, seed, e.detail)
                )
                continue
            history = _gather(segment, starts, 0, lookback)
            truth = _scale(_gather(segment, starts, lookback, horizon), scaler)
            pred = _scale(method(history, horizon), scaler)
            table.rows.append(
                MetricRow(
                    dataset=dataset,
                    horizon=horizon,
                    mse=mse(truth, pred),
                    mae=mae(truth, pred),
                    model=name,
                    seed=seed,
                    windows=len(starts),
                    normalization='none',
                )
            )
        table.add_average(dataset, name, seed)
    return table
