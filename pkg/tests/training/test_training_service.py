import numpy as np
import pytest

from src.common.exceptions import NumericError
from src.common.step_logger import StepLogger
from src.data.schemas import SplitSpec
from src.data.service import chronological_split
from src.model.network import init_params
from src.training.schemas import TrainConfig
from src.training.service import (
    bind_config,
    steps_per_epoch,
    train,
    validation_mse,
)


@pytest.fixture
def setup(plain_config, synthetic_frame):
    config, covariates = bind_config(plain_config, synthetic_frame)
    splits = chronological_split(
        synthetic_frame,
        SplitSpec(train=100, val=100, test=100),
        context=config.lookback,
    )
    return config, covariates, splits


def test_bind_config_reads_the_frame(tiny_config, synthetic_frame):
    config, covariates = bind_config(
        tiny_config.updated(n_variates=None, n_covariates=None),
        synthetic_frame,
    )
    assert config.n_variates == 2
    assert config.n_covariates == covariates.n_components == 5


def test_bind_config_without_covariates(plain_config, synthetic_frame):
    config, covariates = bind_config(plain_config, synthetic_frame)
    assert config.n_covariates == 0
    assert not config.covariates_active
    assert covariates.n_components == 0


def test_steps_per_epoch(setup):
    config, _, splits = setup
    # 100 - 32 - 24 + 1 = 45 windows
    train_config = TrainConfig(batch_size=9)
    assert steps_per_epoch(splits.train, config, train_config) == 5
    train_config = TrainConfig(batch_size=16)
    assert steps_per_epoch(splits.train, config, train_config) == 3


def test_patience_stops_training(setup):
    config, covariates, splits = setup
    params = init_params(config, 0)
    result = train(
        config,
        params,
        splits.train,
        TrainConfig(epochs=20, batch_size=64, patience=5, seed=0),
        covariates,
        validator=lambda p: 1.0,
    )
    assert result.stopped_early
    # one improving epoch, then five without improvement
    assert len(result.history) == 6
    assert result.state.epochs_since_improvement == 5


def test_max_steps_caps_training(setup):
    config, covariates, splits = setup
    result = train(
        config,
        init_params(config, 0),
        splits.train,
        TrainConfig(epochs=5, batch_size=8, max_steps=3, seed=0),
        covariates,
    )
    assert result.state.step == 3


def test_same_seed_same_result(setup):
    config, covariates, splits = setup
    train_config = TrainConfig(epochs=1, batch_size=16, max_steps=2, seed=1)
    first = train(
        config, init_params(config, 1), splits.train, train_config, covariates
    )
    second = train(
        config, init_params(config, 1), splits.train, train_config, covariates
    )
    for name in first.params:
        np.testing.assert_array_equal(
            first.params[name].data, second.params[name].data
        )


def test_step_log_records(setup, tmp_path):
    config, covariates, splits = setup
    logger = StepLogger(tmp_path / 'train_log.jsonl')
    train(
        config,
        init_params(config, 0),
        splits.train,
        TrainConfig(epochs=1, batch_size=32, seed=0),
        covariates,
        val_segment=splits.val,
        step_logger=logger,
    )
    logger.close()
    steps = [r for r in logger.records if r['type'] == 'step']
    epochs = [r for r in logger.records if r['type'] == 'epoch']
    assert len(steps) == 2
    assert len(epochs) == 1
    for key in ('lr', 'huber', 'balance', 'total', 'f_histogram'):
        assert key in steps[0]
    assert len(steps[0]['f_histogram']) == config.n_blocks
    lines = (tmp_path / 'train_log.jsonl').read_text().splitlines()
    assert len(lines) == 3


def test_checkpoints_written(setup, tmp_path):
    config, covariates, splits = setup
    result = train(
        config,
        init_params(config, 0),
        splits.train,
        TrainConfig(epochs=1, batch_size=64, seed=0),
        covariates,
        val_segment=splits.val,
        out_dir=tmp_path,
    )
    assert result.checkpoint == tmp_path / 'best'
    assert (tmp_path / 'final' / 'model.moht').is_file()
    assert np.isfinite(result.state.best_val_mse)


def test_validation_mse_is_finite(setup):
    config, covariates, splits = setup
    mse = validation_mse(
        init_params(config, 0), config, splits.val, covariates, stride=24
    )
    assert np.isfinite(mse)
    assert mse > 0


def test_non_finite_parameters_stop_training(setup):
    config, covariates, splits = setup
    params = init_params(config, 0)
    params['embed.w'].data[:] = np.nan
    with pytest.raises(NumericError):
        train(
            config,
            params,
            splits.train,
            TrainConfig(epochs=1, batch_size=64, seed=0),
            covariates,
        )


def test_resume_continues_the_same_run(tiny_config, synthetic_frame):
    config, covariates = bind_config(tiny_config, synthetic_frame)
    splits = chronological_split(
        synthetic_frame,
        SplitSpec(train=100, val=100, test=100),
        context=config.lookback,
    )
    train_config = TrainConfig(epochs=3, batch_size=16, seed=2)
    full_params = init_params(config, 2)
    full = train(config, full_params, splits.train, train_config, covariates)
    assert set(full.state.rng_states) == {'data', 'dropout'}
    assert full.history[0].train_huber < full.history[0].train_loss

    # stops after two epochs: the second validation score is worse
    scores = iter([1.0, 2.0])
    resumed_params = init_params(config, 2)
    interrupted = train(
        config,
        resumed_params,
        splits.train,
        train_config.updated(patience=1),
        covariates,
        validator=lambda p: next(scores),
    )
    assert interrupted.stopped_early
    resumed = train(
        config,
        resumed_params,
        splits.train,
        train_config,
        covariates,
        state=interrupted.state,
    )
    assert [r.epoch for r in resumed.history] == [2]
    assert resumed.state.step == full.state.step
    for name in full_params:
        np.testing.assert_array_equal(
            resumed_params[name].data, full_params[name].data
        )


@pytest.mark.slow
def test_overfits_a_small_multisine_set(plain_config, synthetic_frame):
    config, covariates = bind_config(plain_config, synthetic_frame)
    # 32 windows: lookback + horizon + 31 rows
    n_rows = config.lookback + config.horizon_out + 31
    splits = chronological_split(
        synthetic_frame,
        SplitSpec(train=n_rows, val=100, test=100),
        context=config.lookback,
    )
    train_config = TrainConfig(
        epochs=500, batch_size=32, max_steps=500, balance_alpha=0.02, seed=0
    )
    assert steps_per_epoch(splits.train, config, train_config) == 1
    result = train(
        config,
        init_params(config, 0),
        splits.train,
        train_config,
        covariates,
    )
    assert result.state.step <= 500
    assert result.history[-1].train_huber < 1e-2
    assert max(max(layer) for layer in result.utilization) < 0.5
