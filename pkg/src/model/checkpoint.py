"""
Checkpoints: a tensor snapshot plus a JSON sidecar holding the config.

``<dir>/model.moht`` and ``<dir>/model.json``.
"""

import logging
from pathlib import Path
from typing import Any, Optional, Union

import orjson

from src.common.exceptions import CheckpointError, ConfigurationError
from src.common.schemas import parse_schema
from src.model.network import ModelParams, param_specs
from src.model.schemas import ModelConfig
from src.tensor.snapshot import load_snapshot, save_snapshot
from src.tensor.tensor import Tensor

logger = logging.getLogger(__name__)

SNAPSHOT_NAME = 'model.moht'
SIDECAR_NAME = 'model.json'


def _resolve(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.parent if path.suffix in ('.moht', '.json') else path


def save_checkpoint(
    directory: Union[str, Path],
    config: ModelConfig,
    params: ModelParams,
    meta: Optional[dict[str, Any]] = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_snapshot(directory / SNAPSHOT_NAME, params.arrays())
    sidecar = {'config': config.model_dump(), 'meta': meta or {}}
    (directory / SIDECAR_NAME).write_bytes(
        orjson.dumps(sidecar, option=orjson.OPT_INDENT_2)
    )
    logger.debug(f'Saved checkpoint to {directory}')
    return directory


def load_checkpoint(
    path: Union[str, Path],
) -> tuple[ModelConfig, ModelParams, dict[str, Any]]:
    """
    Load and validate a checkpoint directory (or either of its files).

    Raises:
        CheckpointError: missing files, bad snapshot, invalid config, or
            tensors that do not match the config's shapes.
    """
    directory = _resolve(path)
    sidecar_path = directory / SIDECAR_NAME
    if not sidecar_path.is_file():
        raise CheckpointError('Missing config sidecar', path=str(sidecar_path))
    try:
        sidecar = orjson.loads(sidecar_path.read_bytes())
        config = parse_schema(ModelConfig, sidecar['config'])
    except (orjson.JSONDecodeError, KeyError, TypeError) as e:
        raise CheckpointError(
            f'Unreadable config sidecar: {e}', path=str(sidecar_path)
        ) from e
    except ConfigurationError as e:
        raise CheckpointError(
            f'Invalid config in checkpoint: {e}', path=str(sidecar_path)
        ) from e

    snapshot_path = directory / SNAPSHOT_NAME
    arrays = load_snapshot(snapshot_path)
    specs = param_specs(config)
    missing = sorted(set(specs) - set(arrays))
    if missing:
        raise CheckpointError(
            f'Checkpoint lacks {len(missing)} tensors, e.g. {missing[0]}',
            path=str(snapshot_path),
        )
    tensors = {}
    for name, spec in specs.items():
        if arrays[name].shape != spec.shape:
            raise CheckpointError(
                f'Shape mismatch for {name}: {arrays[name].shape} vs '
                f'{spec.shape}',
                path=str(snapshot_path),
            )
        tensors[name] = Tensor(arrays[name], requires_grad=True, name=name)
    return config, ModelParams(tensors), sidecar.get('meta', {})
