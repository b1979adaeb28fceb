from typing import Any, Optional

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class MohetsError(Exception):
    """Base error class; carries the process exit code for the CLI"""

    exit_code: int = EXIT_UNEXPECTED

    def __init__(
        self,
        detail: str,
        exit_code: Optional[int] = None,
        **context: Any,
    ):
        if exit_code is not None:
            self.exit_code = exit_code
        self.detail = detail
        self.context = context
        super().__init__(detail)

    def __str__(self) -> str:
        if not self.context:
            return self.detail
        extras = ', '.join(f'{k}={v!r}' for k, v in self.context.items())
        return f'{self.detail} ({extras})'


class UsageError(MohetsError):
    """Bad command-line usage"""

    exit_code = EXIT_USAGE

    def __init__(self, detail: str = 'Invalid usage', **context: Any):
        super().__init__(detail=detail, **context)


class ConfigurationError(MohetsError):
    """Invalid model, training or data configuration"""

    exit_code = EXIT_USAGE

    def __init__(
        self,
        detail: str = 'Invalid configuration',
        key: Optional[str] = None,
        **context: Any,
    ):
        self.key = key
        if key is not None:
            context['key'] = key
        super().__init__(detail=detail, **context)


class DataError(MohetsError):
    """Unreadable, malformed or too-short input data"""

    exit_code = EXIT_DATA

    def __init__(self, detail: str = 'Data error', **context: Any):
        super().__init__(detail=detail, **context)


class CheckpointError(MohetsError):
    """Corrupted or incompatible checkpoint"""

    exit_code = EXIT_DATA

    def __init__(
        self,
        detail: str = 'Checkpoint error',
        path: Optional[str] = None,
        **context: Any,
    ):
        self.path = path
        if path is not None:
            context['path'] = path
        super().__init__(detail=detail, **context)


class NumericError(MohetsError):
    """Non-finite values, divergence, or failed gradient checks"""

    exit_code = EXIT_NUMERIC

    def __init__(
        self,
        detail: str = 'Numeric failure',
        op: Optional[str] = None,
        index: Optional[tuple] = None,
        **context: Any,
    ):
        self.op = op
        self.index = index
        if op is not None:
            context['op'] = op
        if index is not None:
            context['index'] = index
        super().__init__(detail=detail, **context)
