from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from src.common.exceptions import ConfigurationError, DataError
from src.data.schemas import CovariateSpec, Segment, SplitSpec
from src.data.service import (
    calendar_covariates,
    chronological_split,
    instance_denormalize,
    instance_normalize,
    load_csv,
    make_windows,
    patchify,
    window_starts,
)


def _segment(length: int, n_variates: int = 1, context: int = 0) -> Segment:
    values = np.arange(n_variates * length, dtype=np.float64).reshape(
        n_variates, length
    )
    return Segment(
        name='test',
        values=values,
        timestamps=pd.date_range('2020-01-01', periods=length, freq='h'),
        context=context,
    )


def _write(path, rows):
    path.write_text('\n'.join(['date,a,b', *rows]) + '\n')
    return path


def test_load_csv_infers_sub_hourly_frequency(tmp_path):
    path = _write(
        tmp_path / 'two.csv',
        ['2020-01-01 00:00:00,1,2', '2020-01-01 00:15:00,3,4'],
    )
    frame = load_csv(path)
    assert frame.freq == pd.Timedelta(minutes=15)
    assert frame.names == ['a', 'b']
    np.testing.assert_array_equal(frame.values, [[1, 3], [2, 4]])


def test_load_csv_reports_gap_row(tmp_path):
    path = _write(
        tmp_path / 'gap.csv',
        [
            '2020-01-01 00:00:00,1,2',
            '2020-01-01 01:00:00,1,2',
            '2020-01-01 03:00:00,1,2',
        ],
    )
    with pytest.raises(DataError) as exc:
        load_csv(path)
    assert exc.value.context['row'] == 2


def test_load_csv_reports_bad_cell(tmp_path):
    path = _write(
        tmp_path / 'bad.csv',
        ['2020-01-01 00:00:00,1,2', '2020-01-01 01:00:00,x,2'],
    )
    with pytest.raises(DataError) as exc:
        load_csv(path)
    assert exc.value.context['row'] == 1
    assert exc.value.context['column'] == 'a'


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError, match='not found'):
        load_csv(tmp_path / 'absent.csv')


def test_load_csv_round_trips_written_frame(synthetic_frame, csv_path):
    frame = load_csv(csv_path)
    assert frame.n_variates == synthetic_frame.n_variates
    assert frame.freq == pd.Timedelta(hours=1)
    np.testing.assert_allclose(frame.values, synthetic_frame.values)


def test_load_csv_falls_back_to_data_dir(csv_path, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path / '..')
    monkeypatch.setattr(
        'src.data.service.get_settings',
        lambda: SimpleNamespace(MOHETS_DATA_DIR=str(tmp_path)),
    )
    assert load_csv('synthetic.csv').n_variates == 2


def test_split_boundaries(synthetic_frame):
    frame = synthetic_frame
    frame.values = frame.values[:, :20]
    frame.timestamps = frame.timestamps[:20]
    splits = chronological_split(frame, SplitSpec(train=10, val=5, test=5))
    assert [s.offset for s in splits] == [0, 10, 15]
    assert [s.length for s in splits] == [10, 5, 5]


def test_split_context_never_reaches_targets(synthetic_frame):
    spec = SplitSpec(train=400, val=100, test=100)
    splits = chronological_split(synthetic_frame, spec, context=32)
    assert splits.val.context == 32
    assert splits.val.offset == 400 - 32
    assert splits.test.own_length == 100
    np.testing.assert_array_equal(
        splits.test.values[:, 32:], synthetic_frame.values[:, 500:]
    )


def test_split_anchors_at_series_end(synthetic_frame):
    splits = chronological_split(
        synthetic_frame, SplitSpec(train=100, val=50, test=50)
    )
    assert splits.train.offset == 400
    assert splits.test.timestamps[-1] == synthetic_frame.timestamps[-1]


def test_split_larger_than_series(synthetic_frame):
    with pytest.raises(DataError):
        chronological_split(
            synthetic_frame, SplitSpec(train=500, val=100, test=100)
        )


def test_proportional_split_covers_series():
    spec = SplitSpec.proportional(1000)
    assert spec.total == 1000
    assert spec.train > spec.test > spec.val


def test_window_count():
    assert len(window_starts(_segment(700), 672, 24)) == 5
    assert len(window_starts(_segment(8545), 672, 24)) == 7850


def test_window_count_with_stride():
    assert window_starts(_segment(700), 672, 24, stride=2).tolist() == [
        0,
        2,
        4,
    ]


def test_segment_too_short():
    with pytest.raises(DataError) as exc:
        window_starts(_segment(695), 672, 24)
    assert exc.value.context['required'] == 696


def test_window_targets_stay_in_own_points():
    segment = _segment(60, context=32)
    starts = window_starts(segment, 32, 8)
    assert starts[0] == 0
    assert starts[-1] + 32 + 8 == 60


def test_make_windows_aligns_inputs_and_targets():
    segment = _segment(50, n_variates=2)
    batch = make_windows(
        segment, 16, 4, covariates=CovariateSpec(), starts=np.array([0, 3])
    )
    assert batch.inputs.shape == (2, 2, 16)
    assert batch.targets.shape == (2, 2, 4)
    assert batch.covariates.shape == (2, 5, 16)
    np.testing.assert_array_equal(batch.targets[1, 0], [19, 20, 21, 22])
    np.testing.assert_allclose(batch.inputs.mean(axis=-1), 0.0, atol=1e-9)
    np.testing.assert_allclose(
        instance_denormalize(batch.inputs, batch.stats)[1, 1],
        segment.values[1, 3:19],
    )


def test_constant_window_normalizes_to_zero():
    normalized, stats = instance_normalize(np.array([5.0, 5.0, 5.0, 5.0]))
    np.testing.assert_array_equal(normalized, 0.0)
    assert stats.std[0] == 0.0


def test_two_point_window():
    normalized, _ = instance_normalize(np.array([1.0, 3.0]))
    np.testing.assert_allclose(normalized, [-1.0, 1.0], atol=1e-4)


@given(
    arrays(
        np.float64,
        (2, 12),
        elements=st.floats(min_value=-1e3, max_value=1e3),
    )
)
def test_denormalize_inverts_normalize(x):
    normalized, stats = instance_normalize(x)
    np.testing.assert_allclose(
        instance_denormalize(normalized, stats), x, atol=1e-5
    )


def test_patchify_pads_with_last_value():
    patches = patchify(np.arange(1.0, 11.0), 4)
    assert patches.shape == (3, 4)
    np.testing.assert_array_equal(patches[-1], [9.0, 10.0, 10.0, 10.0])


def test_patch_counts():
    assert patchify(np.zeros(672), 8).shape == (84, 8)
    assert patchify(np.zeros(672), 16).shape == (42, 16)


def test_patch_longer_than_series():
    with pytest.raises(ConfigurationError):
        patchify(np.zeros(4), 5)


def test_calendar_features_are_centered():
    stamps = pd.DatetimeIndex(
        ['2024-01-01 00:00', '2024-01-01 12:00', '2024-01-01 23:00']
    )
    hours = calendar_covariates(
        stamps, CovariateSpec(components=['hour_of_day'])
    )
    np.testing.assert_allclose(hours[0], [-0.5, 12 / 23 - 0.5, 0.5])
    weekday = calendar_covariates(
        stamps, CovariateSpec(components=['day_of_week'])
    )
    # 2024-01-01 is a Monday
    np.testing.assert_allclose(weekday[0], -0.5)


def test_sub_hourly_data_gets_minutes():
    spec = CovariateSpec.for_frequency(pd.Timedelta(minutes=15))
    assert spec.components[0] == 'minute_of_hour'
    assert spec.n_components == 6
    assert CovariateSpec.for_frequency(pd.Timedelta(hours=1)).n_components == 5


def test_duplicate_covariates_rejected():
    with pytest.raises(ConfigurationError):
        CovariateSpec(components=['hour_of_day', 'hour_of_day'])
