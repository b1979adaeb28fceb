import math

import numpy as np
import pandas as pd
import pytest

from src.common.exceptions import ConfigurationError, DataError
from src.data.schemas import CovariateSpec, Segment, SplitSpec
from src.data.service import chronological_split, window_starts
from src.inference.service import (
    evaluate_horizons,
    fit_scaler,
    mae,
    mse,
    n_iterations,
    naive_baselines,
    repeat_last_forecast,
    rollout,
    seasonal_naive_forecast,
)
from src.model.network import init_params


def _segment(values: np.ndarray, context: int = 0) -> Segment:
    values = np.atleast_2d(values)
    return Segment(
        name='test',
        values=values,
        timestamps=pd.date_range(
            '2021-01-01', periods=values.shape[1], freq='h'
        ),
        context=context,
    )


def test_iteration_counts():
    assert n_iterations(96, 24) == 4
    assert n_iterations(720, 24) == 30
    assert n_iterations(20, 24) == 1


def test_metrics_known_values():
    assert mse(np.array([0.0, 0.0]), np.array([1.0, -1.0])) == 1.0
    assert mae(np.array([0.0, 0.0]), np.array([1.0, -1.0])) == 1.0
    y, y_hat = np.array([1.0, 2.0, 3.0]), np.array([2.0, 2.0, 2.0])
    assert mse(y, y_hat) == pytest.approx(2 / 3)
    assert mae(y, y_hat) == pytest.approx(2 / 3)
    assert mse(y_hat, y) == mse(y, y_hat)


def test_metrics_shape_mismatch():
    with pytest.raises(ConfigurationError):
        mse(np.zeros(3), np.zeros(4))


def test_rollout_truncates_last_chunk(plain_config):
    params = init_params(plain_config, 0)
    history = np.random.default_rng(0).standard_normal((2, 32))
    result = rollout(plain_config, params, history, 20)
    assert result.predictions.shape == (2, 20)
    assert result.iterations == 1


def test_rollout_equals_chained_chunks(plain_config):
    params = init_params(plain_config, 0)
    history = np.random.default_rng(1).standard_normal((2, 32))
    full = rollout(plain_config, params, history, 48)
    first = rollout(plain_config, params, history, 24)
    shifted = np.concatenate([history, first.predictions], axis=-1)[:, 24:]
    second = rollout(plain_config, params, shifted, 24)
    assert full.iterations == 2
    np.testing.assert_allclose(
        full.predictions,
        np.concatenate([first.predictions, second.predictions], axis=-1),
        rtol=1e-6,
    )


def test_rollout_is_deterministic(plain_config):
    params = init_params(plain_config, 0)
    history = np.random.default_rng(2).standard_normal((2, 32))
    a = rollout(plain_config, params, history, 50)
    b = rollout(plain_config, params, history, 50)
    np.testing.assert_array_equal(a.predictions, b.predictions)


def test_rollout_metrics_against_ground_truth(plain_config):
    params = init_params(plain_config, 0)
    history = np.random.default_rng(3).standard_normal((2, 32))
    truth = np.zeros((2, 30))
    result = rollout(plain_config, params, history, 30, ground_truth=truth)
    assert result.has_metrics
    assert result.mse == pytest.approx(np.mean(result.predictions**2))
    assert result.mse_by_step.shape == (30,)


def test_rollout_per_window_statistics(plain_config):
    params = init_params(plain_config, 0)
    history = np.random.default_rng(4).standard_normal((2, 32))
    per_chunk = rollout(plain_config, params, history, 24)
    per_window = rollout(
        plain_config, params, history, 24, normalization='per_window'
    )
    # identical while the first chunk uses the original window
    np.testing.assert_allclose(per_chunk.predictions, per_window.predictions)


def test_rollout_rejects_wrong_history(plain_config):
    params = init_params(plain_config, 0)
    with pytest.raises(DataError):
        rollout(plain_config, params, np.zeros((2, 30)), 24)


def test_rollout_needs_future_covariates(tiny_config):
    params = init_params(tiny_config, 0)
    with pytest.raises(DataError) as exc:
        rollout(
            tiny_config,
            params,
            np.zeros((2, 32)),
            48,
            covariates=np.zeros((5, 40)),
        )
    assert exc.value.context['required'] == 80


def test_rollout_with_covariates(tiny_config):
    params = init_params(tiny_config, 0)
    history = np.random.default_rng(5).standard_normal((2, 32))
    z = np.random.default_rng(6).uniform(-0.5, 0.5, (5, 32 + 48))
    result = rollout(tiny_config, params, history, 48, covariates=z)
    assert result.predictions.shape == (2, 48)
    assert np.all(np.isfinite(result.predictions))


def test_naive_baselines_on_constant_series():
    segment = _segment(np.full(200, 3.0))
    table = naive_baselines(segment, 48, horizons=[24], period=24)
    for model in ('repeat_last', 'seasonal_naive'):
        row = table.get(model, 24)
        assert row.mse == 0.0
        assert row.mae == 0.0


def test_seasonal_naive_is_exact_on_periodic_series():
    t = np.arange(300)
    segment = _segment(np.sin(2 * math.pi * t / 24))
    table = naive_baselines(segment, 48, horizons=[24, 36], period=24)
    assert table.get('seasonal_naive', 24).mse < 1e-20
    assert table.get('seasonal_naive', 36).mse < 1e-20
    assert table.get('repeat_last', 24).mse > 0.1


def test_baselines_default_to_model_windows():
    segment = _segment(np.arange(200.0))
    table = naive_baselines(segment, 48, horizons=[24], horizon_out=24)
    expected = len(window_starts(segment, 48, 24, stride=24))
    assert table.get('repeat_last', 24).windows == expected
    dense = naive_baselines(segment, 48, horizons=[24], stride=1)
    assert dense.get('repeat_last', 24).windows == 200 - 48 - 24 + 1


def test_baseline_forecasts():
    history = np.array([[1.0, 2.0, 3.0, 4.0]])
    np.testing.assert_array_equal(
        repeat_last_forecast(history, 3), [[4.0, 4.0, 4.0]]
    )
    np.testing.assert_array_equal(
        seasonal_naive_forecast(history, 5, period=2),
        [[3.0, 4.0, 3.0, 4.0, 3.0]],
    )
    with pytest.raises(ConfigurationError):
        seasonal_naive_forecast(history, 2, period=5)


def test_too_long_horizon_is_skipped():
    segment = _segment(np.arange(100.0))
    table = naive_baselines(segment, 48, horizons=[24, 96], period=24)
    skipped = table.get('repeat_last', 96)
    assert skipped.note.startswith('skipped')
    assert math.isnan(skipped.mse)
    average = table.get('repeat_last', 'avg')
    assert average.mse == table.get('repeat_last', 24).mse


def test_scaler_uses_own_points_only():
    segment = _segment(
        np.array([100.0, 100.0, 1.0, 3.0, 1.0, 3.0]), context=2
    )
    scaler = fit_scaler(segment)
    assert scaler.mean[0, 0] == 2.0
    assert scaler.std[0, 0] == 1.0


def test_evaluate_horizons_table(plain_config, synthetic_frame):
    splits = chronological_split(
        synthetic_frame,
        SplitSpec(train=300, val=100, test=200),
        context=plain_config.lookback,
    )
    params = init_params(plain_config, 0)
    table = evaluate_horizons(
        plain_config,
        params,
        splits.test,
        CovariateSpec.disabled(),
        horizons=[24, 48, 1000],
        scaler=fit_scaler(splits.train),
        dataset='synthetic',
    )
    assert [row.horizon for row in table.rows] == [24, 48, 1000, 'avg']
    first, second = table.rows[0], table.rows[1]
    assert first.windows == len(range(0, 200 - 24 + 1, 24))
    assert table.rows[2].note.startswith('skipped')
    assert table.rows[3].mse == pytest.approx((first.mse + second.mse) / 2)
    assert table.rows[3].dataset == 'synthetic'
