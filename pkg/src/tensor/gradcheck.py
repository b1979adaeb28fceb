"""Finite-difference verification of analytic gradients."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from src.common.exceptions import ConfigurationError, NumericError
from src.tensor.tensor import Graph, Tensor

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5

Coordinate = tuple[str, int]


@dataclass
class GradCheckReport:
    """Outcome of one gradient check."""

    max_rel_error: float
    probes: int
    h: float
    worst: Optional[Coordinate] = None
    errors: dict[str, float] = field(default_factory=dict)

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance

    def to_dict(self) -> dict:
        return {
            'max_rel_error': self.max_rel_error,
            'probes': self.probes,
            'h': self.h,
            'worst': list(self.worst) if self.worst else None,
            'errors': self.errors,
        }


def _as_named(
    inputs: Union[Mapping[str, Tensor], Sequence[Tensor]],
) -> dict[str, Tensor]:
    if isinstance(inputs, Mapping):
        return dict(inputs)
    return {f'input{i}': t for i, t in enumerate(inputs)}


def sample_coordinates(
    tensors: Mapping[str, Tensor],
    probes: int,
    rng: np.random.Generator,
    required: Sequence[str] = (),
) -> list[Coordinate]:
    """
    Pick ``probes`` random (name, flat index) pairs.

    One probe is reserved for the first tensor whose name contains each
    ``required`` fragment; the rest are drawn uniformly over tensors, then
    uniformly within the chosen tensor.
    """
    names = sorted(tensors)
    coords: list[Coordinate] = []
    for fragment in required:
        matching = [n for n in names if fragment in n]
        if not matching:
            raise ConfigurationError(
                f'No parameter matches required probe {fragment!r}',
                key='required',
            )
        name = matching[int(rng.integers(len(matching)))]
        coords.append((name, int(rng.integers(tensors[name].size))))
    while len(coords) < probes:
        name = names[int(rng.integers(len(names)))]
        coords.append((name, int(rng.integers(tensors[name].size))))
    return coords


def grad_check(
    fn: Callable[[], Tensor],
    inputs: Union[Mapping[str, Tensor], Sequence[Tensor]],
    h: float = DEFAULT_STEP,
    coordinates: Optional[Sequence[Coordinate]] = None,
) -> GradCheckReport:
    """
    Compare reverse-mode gradients of the scalar ``fn()`` with central
    differences.

    Args:
        fn: Closure recomputing the scalar output from the current input
            values.
        inputs: Tensors to differentiate with respect to (64-bit only).
        h: Central-difference step per coordinate.
        coordinates: Explicit (name, flat index) probes; all coordinates of
            every input when omitted.

    Returns:
        A report whose ``max_rel_error`` is the maximum over probes of
        ``|analytic - numeric| / max(1, |numeric|)``.
    """
    named = _as_named(inputs)
    for name, tensor in named.items():
        if tensor.dtype != np.float64:
            raise ConfigurationError(
                f'Gradient checks need 64-bit inputs; {name} is '
                f'{tensor.dtype.name}',
                key='dtype',
            )
        tensor.requires_grad = True
        tensor.zero_grad()

    with Graph() as graph:
        out = fn()
        graph.backward(out)

    analytic: dict[str, np.ndarray] = {}
    for name, tensor in named.items():
        g = tensor.grad if tensor.grad is not None else np.zeros_like(
            tensor.data
        )
        if not np.all(np.isfinite(g)):
            raise NumericError(
                f'Non-finite analytic gradient for {name}', op=name
            )
        analytic[name] = g.reshape(-1).copy()

    if coordinates is None:
        coordinates = [
            (name, i) for name, t in named.items() for i in range(t.size)
        ]

    max_err, worst = 0.0, None
    per_tensor: dict[str, float] = {}
    for name, index in coordinates:
        flat = named[name].data.reshape(-1)
        original = flat[index]
        flat[index] = original + h
        plus = fn().item()
        flat[index] = original - h
        minus = fn().item()
        flat[index] = original
        numeric = (plus - minus) / (2.0 * h)
        if not np.isfinite(numeric):
            raise NumericError(
                f'Non-finite numeric gradient for {name}[{index}]', op=name
            )
        err = abs(analytic[name][index] - numeric) / max(1.0, abs(numeric))
        per_tensor[name] = max(per_tensor.get(name, 0.0), err)
        if err >= max_err:
            max_err, worst = err, (name, index)

    logger.debug(
        f'grad_check: {len(coordinates)} probes, max err {max_err:.3e}'
    )
    return GradCheckReport(
        max_rel_error=float(max_err),
        probes=len(coordinates),
        h=h,
        worst=worst,
        errors=per_tensor,
    )
