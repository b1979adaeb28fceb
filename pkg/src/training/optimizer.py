"""AdamW with decoupled decay, warmup-cosine schedule and norm clipping."""

import math

import numpy as np

from src.common.exceptions import NumericError
from src.model.network import ModelParams, decays
from src.training.schemas import TrainConfig, TrainState


def lr_schedule(step: int, total_steps: int, config: TrainConfig) -> float:
    """
    Linear ramp from 0 to ``max_lr`` over the first
    ``floor(warmup_fraction * total)`` steps, then cosine down to ``min_lr``
    at ``total_steps``.
    """
    warmup = int(config.warmup_fraction * total_steps)
    if step < warmup:
        return config.max_lr * step / warmup
    progress = (step - warmup) / max(1, total_steps - warmup)
    progress = min(1.0, max(0.0, progress))
    cosine = 0.5 * (1.0 + math.cos(math.pi * progress))
    return config.min_lr + (config.max_lr - config.min_lr) * cosine


def grad_norm(params: ModelParams) -> float:
    total = 0.0
    for _, t in params.items():
        if t.grad is not None:
            total += float(np.sum(np.square(t.grad, dtype=np.float64)))
    return math.sqrt(total)


def clip_grad_norm(params: ModelParams, max_norm: float) -> tuple[float, bool]:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    norm = grad_norm(params)
    if norm <= max_norm or norm == 0.0:
        return norm, False
    scale = max_norm / norm
    for _, t in params.items():
        if t.grad is not None:
            t.grad = (t.grad * scale).astype(t.grad.dtype)
    return norm, True


def adamw_step(
    params: ModelParams,
    state: TrainState,
    lr: float,
    config: TrainConfig,
) -> None:
    """
    One bias-corrected AdamW update with decay applied directly to the
    weights.

    Raises:
        NumericError: some gradient is non-finite; no parameter is changed.
    """
    for name, t in params.items():
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise NumericError(
                f'Non-finite gradient for {name}; step rejected', op=name
            )

    state.step += 1
    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for name, t in params.items():
        g = t.grad
        if g is None:
            continue
        m = state.first_moments.get(name)
        v = state.second_moments.get(name)
        if m is None:
            m = np.zeros_like(t.data)
            v = np.zeros_like(t.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.first_moments[name] = m
        state.second_moments[name] = v

        value = t.data
        if config.weight_decay and decays(name):
            value = value * (1.0 - lr * config.weight_decay)
        m_hat = m / correction1
        v_hat = v / correction2
        update = lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        t.data = (value - update).astype(t.data.dtype)
