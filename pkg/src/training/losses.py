from typing import Literal, Sequence, Union

import numpy as np

from src.common.exceptions import ConfigurationError
from src.model.schemas import RouterAssignment
from src.tensor import ops
from src.tensor.tensor import Tensor, as_tensor


def huber_loss(
    target: Union[Tensor, np.ndarray], pred: Tensor, delta: float = 2.0
) -> Tensor:
    """
    Mean of ``0.5 e^2`` where ``|e| <= delta``, else
    ``delta (|e| - delta/2)``.
    """
    target = as_tensor(target, like=pred)
    if target.shape != pred.shape:
        raise ConfigurationError(
            'Prediction and target shapes differ',
            shapes=(pred.shape, target.shape),
        )
    err = target - pred
    magnitude = ops.abs(err)
    quadratic = err * err * 0.5
    linear = (magnitude - 0.5 * delta) * delta
    return ops.where(magnitude.data <= delta, quadratic, linear).mean()


def balance_loss(
    assignments: Sequence[RouterAssignment],
    reduction: Literal['mean', 'sum'] = 'mean',
) -> Tensor:
    """
    ``N * sum_i f_i r_i`` per expert layer, reduced over layers.

    ``f_i`` (selection share) is a constant; gradients reach the router
    through the mean scores ``r_i``.
    """
    if not assignments:
        raise ConfigurationError('balance_loss needs at least one layer')
    total = None
    for a in assignments:
        n = a.n_experts
        f = Tensor(a.fractions.astype(a.scores.dtype), dtype=a.scores.dtype)
        r = a.scores.reshape(-1, n).mean(axis=0)
        layer = (f * r).sum() * float(n)
        total = layer if total is None else total + layer
    if reduction == 'mean':
        total = total * (1.0 / len(assignments))
    return total


def total_loss(
    pred: Tensor,
    target: Union[Tensor, np.ndarray],
    assignments: Sequence[RouterAssignment],
    delta: float = 2.0,
    alpha: float = 0.02,
    reduction: Literal['mean', 'sum'] = 'mean',
) -> tuple[Tensor, Tensor, Tensor]:
    """``huber + alpha * balance``; returns ``(total, huber, balance)``."""
    huber = huber_loss(target, pred, delta)
    balance = balance_loss(assignments, reduction)
    if alpha == 0.0:
        return huber, huber, balance
    return huber + balance * alpha, huber, balance
