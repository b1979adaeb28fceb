from typing import Any, Mapping, Type, TypeVar

from pydantic import BaseModel, ConfigDict, ValidationError

from src.common.exceptions import ConfigurationError

SchemaT = TypeVar('SchemaT', bound=BaseModel)


class BaseSchema(BaseModel):
    """Base schema with common configuration"""

    model_config = ConfigDict(
        extra='forbid',
        validate_assignment=True,
        json_schema_extra={
            'example': {}  # Add examples in child classes
        },
    )


def parse_schema(cls: Type[SchemaT], data: Mapping[str, Any]) -> SchemaT:
    """
    Validate ``data`` into ``cls``.

    Pydantic validation failures become :class:`ConfigurationError` naming
    the first offending key.
    """
    try:
        return cls.model_validate(dict(data))
    except ValidationError as e:
        first = e.errors()[0]
        key = '.'.join(str(part) for part in first['loc']) or None
        raise ConfigurationError(
            f'{cls.__name__}: {first["msg"]}', key=key
        ) from e
