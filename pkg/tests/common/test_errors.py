import pytest

from src.common.exceptions import (
    EXIT_DATA,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_UNEXPECTED,
    EXIT_USAGE,
    CheckpointError,
    ConfigurationError,
    DataError,
    MohetsError,
    NumericError,
    UsageError,
)
from src.common.schemas import BaseSchema, parse_schema
from src.common.utils import handle_errors, parse_int_list


class _Window(BaseSchema):
    lookback: int
    patch: int = 8


def _raise(error: Exception) -> None:
    raise error


def test_exit_codes():
    assert UsageError().exit_code == EXIT_USAGE
    assert ConfigurationError().exit_code == EXIT_USAGE
    assert DataError().exit_code == EXIT_DATA
    assert CheckpointError().exit_code == EXIT_DATA
    assert NumericError().exit_code == EXIT_NUMERIC
    assert MohetsError('boom').exit_code == EXIT_UNEXPECTED


def test_exit_code_override():
    assert MohetsError('boom', exit_code=EXIT_DATA).exit_code == EXIT_DATA


def test_context_in_message():
    err = DataError('Gap in timestamps', row=2)
    assert str(err) == "Gap in timestamps (row=2)"
    assert err.context == {'row': 2}
    assert str(MohetsError('plain')) == 'plain'


def test_structured_attributes():
    config = ConfigurationError('bad', key='top_k')
    assert config.key == 'top_k'
    assert config.context['key'] == 'top_k'
    checkpoint = CheckpointError('missing', path='/tmp/x')
    assert checkpoint.path == '/tmp/x'
    numeric = NumericError('nan', op='softmax', index=(1, 2))
    assert numeric.op == 'softmax'
    assert numeric.index == (1, 2)
    assert "index=(1, 2)" in str(numeric)


def test_errors_are_not_value_errors():
    # pydantic validators must not wrap these into ValidationError
    assert not issubclass(ConfigurationError, ValueError)


@pytest.mark.parametrize(
    ('error', 'code'),
    [
        (UsageError('x'), EXIT_USAGE),
        (ConfigurationError('x', key='k'), EXIT_USAGE),
        (DataError('x'), EXIT_DATA),
        (CheckpointError('x', path='p'), EXIT_DATA),
        (NumericError('x', op='exp'), EXIT_NUMERIC),
        (RuntimeError('x'), EXIT_UNEXPECTED),
    ],
)
def test_handle_errors_maps_exit_codes(error, code):
    assert handle_errors(_raise, error) == code


def test_handle_errors_success():
    calls = []
    assert handle_errors(calls.append, 1) == EXIT_OK
    assert calls == [1]


def test_parse_int_list():
    assert parse_int_list('96,192, 336', 'horizons') == [96, 192, 336]
    assert parse_int_list('24,', 'horizons') == [24]


@pytest.mark.parametrize('raw', ['', '96,x', '0', '24,-1'])
def test_parse_int_list_rejects(raw):
    with pytest.raises(UsageError) as exc:
        parse_int_list(raw, 'horizons')
    assert exc.value.context['value'] == raw


def test_parse_schema_names_the_key():
    assert parse_schema(_Window, {'lookback': 96}).patch == 8
    with pytest.raises(ConfigurationError) as exc:
        parse_schema(_Window, {'lookback': 'long'})
    assert exc.value.key == 'lookback'
    with pytest.raises(ConfigurationError) as exc:
        parse_schema(_Window, {'lookback': 96, 'colour': 'red'})
    assert exc.value.key == 'colour'
