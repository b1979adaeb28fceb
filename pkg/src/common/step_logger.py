"""
Structured JSON-lines logging for training runs.

Every optimizer step and every epoch summary is written as one JSON object
per line to ``train_log.jsonl`` inside the run directory. The logger is kept
separate from the application logger so the file stays machine-readable.
"""

import logging
from collections import deque
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np
import orjson

MAX_RECORDS = 10_000


class RecordType(str, Enum):
    """Types of training log records."""

    STEP = 'step'
    EPOCH = 'epoch'
    EVENT = 'event'


def _default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f'Cannot serialize {type(value).__name__}')


class StepLogger:
    """
    JSON-lines writer for per-step and per-epoch training records.

    Only the newest ``max_records`` records are kept in memory; the file
    holds all of them. Use as a context manager or call ``close``.
    """

    def __init__(
        self, path: Optional[Path] = None, max_records: int = MAX_RECORDS
    ):
        self.path = path
        self.records: deque[dict[str, Any]] = deque(maxlen=max_records)
        # Built directly so it is never registered with the logging manager
        self._logger = logging.Logger('mohets.steps', logging.INFO)
        self._handler: Optional[logging.Handler] = None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            self._handler = logging.FileHandler(path, mode='w')
            self._handler.setFormatter(logging.Formatter('%(message)s'))
            self._logger.addHandler(self._handler)

    def __enter__(self) -> 'StepLogger':
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.close()

    def _log(self, record_type: RecordType, data: dict[str, Any]) -> None:
        record = {'type': record_type.value, **data}
        self.records.append(record)
        if self._handler is not None:
            line = orjson.dumps(
                record,
                default=_default,
                option=orjson.OPT_SERIALIZE_NUMPY,
            )
            self._logger.info(line.decode())

    def log_step(
        self,
        step: int,
        epoch: int,
        lr: float,
        huber: float,
        balance: float,
        total: float,
        f_histogram: list[list[float]],
        grad_norm: Optional[float] = None,
        clipped: bool = False,
    ) -> None:
        self._log(
            RecordType.STEP,
            {
                'step': step,
                'epoch': epoch,
                'lr': lr,
                'huber': huber,
                'balance': balance,
                'total': total,
                'grad_norm': grad_norm,
                'clipped': clipped,
                'f_histogram': f_histogram,
            },
        )

    def log_epoch(
        self,
        epoch: int,
        val_mse: float,
        best_val_mse: float,
        epochs_since_improvement: int,
    ) -> None:
        self._log(
            RecordType.EPOCH,
            {
                'epoch': epoch,
                'val_mse': val_mse,
                'best_val_mse': best_val_mse,
                'epochs_since_improvement': epochs_since_improvement,
            },
        )

    def log_event(self, action: str, **metadata: Any) -> None:
        self._log(RecordType.EVENT, {'action': action, **metadata})

    def close(self) -> None:
        if self._handler is not None:
            self._handler.close()
            self._logger.removeHandler(self._handler)
            self._handler = None
