import logging
from typing import Any, Callable

from src.common.exceptions import (
    EXIT_OK,
    EXIT_UNEXPECTED,
    MohetsError,
    UsageError,
)

logger = logging.getLogger(__name__)


def handle_errors(func: Callable[..., Any], *args: Any, **kwargs: Any) -> int:
    """
    Generic error handler for command bodies.

    Returns the process exit code: 0 on success, the error's own code for
    known failures, 1 for anything unexpected.
    """
    try:
        func(*args, **kwargs)
    except MohetsError as e:
        logger.error(f'{type(e).__name__}: {e}')
        return e.exit_code
    except Exception as e:
        logger.exception(f'Unexpected error in {func.__name__}: {str(e)}')
        return EXIT_UNEXPECTED
    return EXIT_OK


def parse_int_list(raw: str, name: str) -> list[int]:
    """Parse a comma-separated list of positive integers."""
    try:
        values = [int(v) for v in raw.split(',') if v.strip()]
    except ValueError:
        raise UsageError(f'{name} must be comma-separated integers', value=raw)
    if not values or any(v <= 0 for v in values):
        raise UsageError(f'{name} must be positive integers', value=raw)
    return values
