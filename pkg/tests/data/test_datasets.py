import numpy as np
import orjson
import pandas as pd

from src.data.datasets import (
    get_dataset_info,
    iterate_batches,
    seasonal_period,
    split_for,
    synthetic_multisine,
    write_split_manifest,
)
from src.data.schemas import SplitSpec
from src.data.service import chronological_split


def test_registry_lookup_by_path_stem():
    info = get_dataset_info('data/ETTh1.csv')
    assert info.name == 'ETTh1'
    assert info.split.total == 8545 + 2881 + 2881
    assert get_dataset_info('electricity').name == 'ECL'
    assert get_dataset_info('unknown.csv') is None


def test_registered_split_used_when_it_fits():
    frame = synthetic_multisine(15000, n_variates=1)
    assert split_for(frame, 'ETTh1.csv') == SplitSpec(
        train=8545, val=2881, test=2881
    )


def test_short_series_falls_back_to_proportional(synthetic_frame):
    spec = split_for(synthetic_frame, 'ETTh1.csv')
    assert spec.total == synthetic_frame.length


def test_seasonal_period():
    assert seasonal_period(pd.Timedelta(hours=1)) == 24
    assert seasonal_period(pd.Timedelta(minutes=15)) == 96


def test_synthetic_series_is_seeded():
    a = synthetic_multisine(100, seed=5)
    b = synthetic_multisine(100, seed=5)
    c = synthetic_multisine(100, seed=6)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.allclose(a.values, c.values)
    assert a.names == ['var0', 'var1', 'var2']


def test_batches_cover_every_window_once(synthetic_frame):
    segment = chronological_split(
        synthetic_frame, SplitSpec(train=400, val=100, test=100)
    ).train
    rng = np.random.default_rng(0)
    batches = list(iterate_batches(segment, 32, 24, batch_size=64, rng=rng))
    starts = np.concatenate([b.starts for b in batches])
    assert sorted(starts.tolist()) == list(range(400 - 56 + 1))
    assert all(b.n_windows <= 64 for b in batches)


def test_split_manifest(tmp_path):
    path = write_split_manifest(
        tmp_path / 'split.json',
        'ETTh1',
        SplitSpec(train=10, val=5, test=5),
        672,
        24,
        2021,
    )
    payload = orjson.loads(path.read_bytes())
    assert payload['lengths'] == {'train': 10, 'val': 5, 'test': 5}
    assert payload['L'] == 672
    assert payload['seed'] == 2021
