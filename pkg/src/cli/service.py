"""
Config resolution and run-directory bookkeeping shared by the commands.

Precedence, lowest first: preset, registered dataset settings, the
``--config`` file, command-line flags.
"""

import logging
from argparse import Namespace
from pathlib import Path
from typing import Any, Optional

import orjson

from src.cli.schemas import MANIFEST_NAME, ConfigFile, RunManifest
from src.common.config import get_settings
from src.common.exceptions import UsageError
from src.common.monitoring import PerformanceMonitor
from src.common.schemas import parse_schema
from src.data.schemas import DatasetInfo
from src.model.schemas import ModelConfig
from src.training.schemas import TrainConfig

logger = logging.getLogger(__name__)

# flag dest -> ModelConfig field
MODEL_FLAGS = {
    'patch': 'patch',
    'hout': 'horizon_out',
    'lookback': 'lookback',
    'shared_expert': 'shared_expert',
    'routed_expert': 'routed_expert',
    'norm_scheme': 'norm_scheme',
    'head': 'head',
    'dropout': 'dropout',
    'drop_path': 'drop_path',
}

# flag dest -> TrainConfig field
TRAIN_FLAGS = {
    'epochs': 'epochs',
    'batch_size': 'batch_size',
    'max_lr': 'max_lr',
    'min_lr': 'min_lr',
    'max_steps': 'max_steps',
    'train_stride': 'train_stride',
    'eval_stride': 'eval_stride',
    'alpha': 'balance_alpha',
    'patience': 'patience',
}


def read_config_file(path: Optional[str]) -> ConfigFile:
    if path is None:
        return ConfigFile()
    config_path = Path(path)
    if not config_path.is_file():
        raise UsageError(f'Config file not found: {config_path}', key='config')
    try:
        raw = orjson.loads(config_path.read_bytes())
    except orjson.JSONDecodeError as e:
        raise UsageError(
            f'Config file is not valid JSON: {e}', key='config'
        ) from e
    if not isinstance(raw, dict):
        raise UsageError('Config file must hold a JSON object', key='config')
    unknown = sorted(set(raw) - set(ConfigFile.model_fields))
    if unknown:
        raise UsageError(
            f'Unknown config section {unknown[0]!r}', key=unknown[0]
        )
    return parse_schema(ConfigFile, raw)


def _flag_values(args: Namespace, mapping: dict[str, str]) -> dict[str, Any]:
    values = {}
    for dest, field_name in mapping.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[field_name] = value
    return values


def resolve_seed(args: Namespace) -> int:
    seed = getattr(args, 'seed', None)
    return get_settings().MOHETS_SEED if seed is None else seed


def resolve_model_config(
    args: Namespace,
    info: Optional[DatasetInfo] = None,
    file_config: Optional[ConfigFile] = None,
) -> ModelConfig:
    file_config = file_config or ConfigFile()
    overrides: dict[str, Any] = {}
    if info is not None:
        overrides.update(patch=info.patch, horizon_out=info.horizon_out)
    overrides.update(file_config.model)
    preset = overrides.pop('preset', None)
    overrides.update(_flag_values(args, MODEL_FLAGS))
    if getattr(args, 'no_covariates', False):
        overrides['use_covariates'] = False
    preset = getattr(args, 'preset', None) or preset
    if preset is None:
        preset = info.preset if info is not None else 'tiny'
    return ModelConfig.from_preset(preset, **overrides)


def resolve_train_config(
    args: Namespace,
    info: Optional[DatasetInfo] = None,
    file_config: Optional[ConfigFile] = None,
) -> TrainConfig:
    file_config = file_config or ConfigFile()
    overrides = {**file_config.train, **_flag_values(args, TRAIN_FLAGS)}
    if getattr(args, 'no_clip', False):
        overrides['clip_norm'] = None
    overrides['seed'] = resolve_seed(args)
    return TrainConfig.for_dataset(info, **overrides)


def run_directory(args: Namespace) -> Path:
    out = Path(args.out or get_settings().MOHETS_OUT_DIR)
    out.mkdir(parents=True, exist_ok=True)
    return out


def manifest_path(run_dir: Path) -> Path:
    return run_dir / MANIFEST_NAME


def write_manifest(
    run_dir: Path,
    args: Namespace,
    config: dict[str, Any],
    outputs: dict[str, Path],
    monitor: PerformanceMonitor,
    argv: Optional[list[str]] = None,
) -> Path:
    settings = get_settings()
    flags = {
        k: v
        for k, v in vars(args).items()
        if k != 'handler' and not callable(v)
    }
    manifest = RunManifest(
        command=args.command,
        config={**config, 'flags': flags},
        seed=resolve_seed(args),
        version=settings.PROJECT_VERSION,
        threads=args.threads,
        timings=monitor.get_summary(),
        outputs={
            name: _relative(path, run_dir) for name, path in outputs.items()
        },
        argv=argv,
    )
    path = manifest_path(run_dir)
    path.write_bytes(
        orjson.dumps(manifest.model_dump(), option=orjson.OPT_INDENT_2)
    )
    logger.info(f'Wrote {path}')
    return path


def _relative(path: Path, run_dir: Path) -> str:
    try:
        return str(Path(path).relative_to(run_dir))
    except ValueError:
        return str(path)
