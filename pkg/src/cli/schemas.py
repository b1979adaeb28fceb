from datetime import datetime, timezone
from typing import Any, Optional

from pydantic import Field

from src.common.schemas import BaseSchema

MANIFEST_NAME = 'manifest.json'


class RunManifest(BaseSchema):
    """Everything needed to repeat an artifact-producing command."""

    command: str
    config: dict[str, Any] = Field(default_factory=dict)
    seed: int
    version: str
    threads: int = 1
    timings: dict[str, Any] = Field(default_factory=dict)
    outputs: dict[str, str] = Field(default_factory=dict)
    created_at: str = Field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat()
    )
    argv: Optional[list[str]] = None

    model_config = {
        **BaseSchema.model_config,
        'json_schema_extra': {
            'example': {
                'command': 'train',
                'seed': 2021,
                'version': '0.1.0',
                'outputs': {'checkpoint': 'checkpoint'},
            }
        },
    }


class ConfigFile(BaseSchema):
    """Layout of a ``--config`` JSON file; sections are validated later."""

    model: dict[str, Any] = Field(default_factory=dict)
    train: dict[str, Any] = Field(default_factory=dict)
