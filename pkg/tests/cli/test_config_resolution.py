import orjson
import pytest

from src.cli.main import build_parser
from src.cli.service import (
    read_config_file,
    resolve_model_config,
    resolve_train_config,
)
from src.common.exceptions import ConfigurationError, UsageError
from src.data.datasets import get_dataset_info


def _args(*argv):
    return build_parser().parse_args(['train', '--data', *argv])


def test_registered_dataset_row():
    args = _args(
        'data/ETTh1.csv', '--preset', 'tiny', '--patch', '8', '--hout', '24'
    )
    info = get_dataset_info(args.data)
    config = resolve_model_config(args, info)
    assert (config.d_model, config.n_blocks) == (64, 4)
    assert (config.patch, config.horizon_out) == (8, 24)
    train_config = resolve_train_config(args, info)
    assert train_config.batch_size == 128
    assert train_config.epochs == 30
    assert train_config.max_lr == pytest.approx(3.2e-3)
    assert train_config.min_lr == pytest.approx(1.2e-4)


def test_dataset_preset_without_flags():
    args = _args('ETTm1.csv', '--seed', '5')
    info = get_dataset_info(args.data)
    config = resolve_model_config(args, info)
    assert config.d_model == 256
    assert config.patch == 16
    assert resolve_train_config(args, info).seed == 5


def test_flags_override_file_override_dataset(tmp_path):
    path = tmp_path / 'config.json'
    path.write_bytes(
        orjson.dumps({
            'model': {'preset': 'small', 'patch': 8, 'head': 'mlp'},
            'train': {'epochs': 3, 'batch_size': 16},
        })
    )
    args = _args(
        'ETTm1.csv',
        '--config',
        str(path),
        '--patch',
        '4',
        '--batch-size',
        '8',
        '--no-clip',
    )
    info = get_dataset_info(args.data)
    file_config = read_config_file(args.config)
    config = resolve_model_config(args, info, file_config)
    assert config.d_model == 128
    assert config.patch == 4
    assert config.head == 'mlp'
    train_config = resolve_train_config(args, info, file_config)
    assert train_config.epochs == 3
    assert train_config.batch_size == 8
    assert train_config.clip_norm is None
    assert train_config.max_lr == pytest.approx(info.max_lr)


def test_no_covariates_flag():
    args = _args('series.csv', '--no-covariates')
    assert not resolve_model_config(args).use_covariates


def test_unknown_model_key_in_file(tmp_path):
    path = tmp_path / 'config.json'
    path.write_bytes(orjson.dumps({'model': {'colour': 'red'}}))
    args = _args('series.csv', '--config', str(path))
    with pytest.raises(ConfigurationError) as exc:
        resolve_model_config(args, None, read_config_file(args.config))
    assert exc.value.key == 'colour'


def test_config_file_errors(tmp_path):
    with pytest.raises(UsageError):
        read_config_file(str(tmp_path / 'absent.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text('{model:')
    with pytest.raises(UsageError) as exc:
        read_config_file(str(broken))
    assert exc.value.context['key'] == 'config'
    listed = tmp_path / 'list.json'
    listed.write_text('[1, 2]')
    with pytest.raises(UsageError):
        read_config_file(str(listed))
