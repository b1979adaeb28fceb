"""Seeded random streams and initialization fills."""

import zlib
from typing import Any

import numpy as np

from src.tensor.tensor import Tensor, get_default_dtype


def make_generator(seed: int, stream: str = 'default') -> np.random.Generator:
    """
    A Philox (counter-based, 64-bit) generator for a named sub-stream.

    The same ``(seed, stream)`` pair always yields the same sequence, and
    distinct stream names are statistically independent.
    """
    sequence = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(zlib.crc32(stream.encode()),)
    )
    return np.random.Generator(np.random.Philox(sequence))


def normal_fill(
    shape: tuple[int, ...],
    rng: np.random.Generator,
    std: float = 1.0,
    dtype: Any = None,
    name: str | None = None,
) -> Tensor:
    dtype = dtype or get_default_dtype()
    data = rng.standard_normal(shape).astype(dtype) * dtype(std)
    return Tensor(data, requires_grad=True, name=name, dtype=dtype)


def xavier_uniform(
    shape: tuple[int, ...],
    rng: np.random.Generator,
    fan_in: int | None = None,
    fan_out: int | None = None,
    dtype: Any = None,
    name: str | None = None,
) -> Tensor:
    """Glorot uniform fill; fans default to the last two extents."""
    dtype = dtype or get_default_dtype()
    if fan_in is None:
        fan_in = shape[0] if len(shape) > 1 else shape[-1]
    if fan_out is None:
        fan_out = shape[1] if len(shape) > 1 else shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True, name=name, dtype=dtype)


def constant_fill(
    shape: tuple[int, ...],
    value: float,
    dtype: Any = None,
    name: str | None = None,
) -> Tensor:
    dtype = dtype or get_default_dtype()
    return Tensor(
        np.full(shape, value, dtype=dtype),
        requires_grad=True,
        name=name,
        dtype=dtype,
    )
