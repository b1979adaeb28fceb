import logging
import sys

from pythonjsonlogger.json import JsonFormatter

from src.common.config import get_settings

HUMAN_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
JSON_FIELDS = '%(asctime)s %(name)s %(levelname)s %(message)s'


def configure_logging(level: str | None = None) -> None:
    """
    Install the root handler.

    Development gets human-readable lines; production gets one JSON object
    per record so runs can be grepped by tooling.
    """
    settings = get_settings()
    handler = logging.StreamHandler(sys.stderr)
    if settings.is_production:
        handler.setFormatter(
            JsonFormatter(
                JSON_FIELDS,
                rename_fields={'asctime': 'timestamp', 'levelname': 'level'},
            )
        )
    else:
        handler.setFormatter(logging.Formatter(HUMAN_FORMAT))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel((level or settings.MOHETS_LOG_LEVEL).upper())
