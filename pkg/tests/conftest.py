import numpy as np
import pytest
from hypothesis import settings

from src.data.datasets import synthetic_multisine, write_csv
from src.model.schemas import ModelConfig
from src.tensor.tensor import default_dtype

settings.register_profile('fast', max_examples=5)

# Short look-back so a full forward pass stays in the millisecond range
SMALL_SHAPE = {'lookback': 32, 'patch': 8, 'horizon_out': 24}


@pytest.fixture
def tiny_config() -> ModelConfig:
    """Tiny preset, two variates with daily calendar covariates."""
    return ModelConfig.from_preset(
        'tiny', **SMALL_SHAPE, n_variates=2, n_covariates=5
    )


@pytest.fixture
def plain_config() -> ModelConfig:
    """Tiny preset without covariates or stochastic layers."""
    return ModelConfig.from_preset(
        'tiny',
        **SMALL_SHAPE,
        n_variates=2,
        n_covariates=0,
        use_covariates=False,
        dropout=0.0,
        drop_path=0.0,
    )


@pytest.fixture
def float64():
    with default_dtype(np.float64):
        yield


@pytest.fixture
def synthetic_frame():
    return synthetic_multisine(600, n_variates=2, seed=3)


@pytest.fixture
def csv_path(tmp_path, synthetic_frame):
    return write_csv(synthetic_frame, tmp_path / 'synthetic.csv')
