"""
The training loop: batches, losses, optimizer steps, validation and early
stopping.
"""

import logging
import math
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from src.common.exceptions import NumericError
from src.common.step_logger import StepLogger
from src.data.datasets import iterate_batches
from src.data.schemas import CovariateSpec, Segment, TimeSeriesFrame
from src.data.service import window_starts
from src.model.checkpoint import save_checkpoint
from src.model.network import ModelParams, model_forward
from src.model.schemas import ForwardContext, ModelConfig, RouterAssignment
from src.tensor.random import make_generator
from src.tensor.tensor import Graph
from src.training.losses import total_loss
from src.training.optimizer import adamw_step, clip_grad_norm, lr_schedule
from src.training.schemas import (
    EpochRecord,
    TrainConfig,
    TrainResult,
    TrainState,
)

logger = logging.getLogger(__name__)

Validator = Callable[[ModelParams], Optional[float]]


def bind_config(
    config: ModelConfig, frame: TimeSeriesFrame
) -> tuple[ModelConfig, CovariateSpec]:
    """Fill the data-dependent fields of ``config`` from ``frame``."""
    if config.use_covariates:
        spec = CovariateSpec.for_frequency(frame.freq)
    else:
        spec = CovariateSpec.disabled()
    bound = config.updated(
        n_variates=frame.n_variates, n_covariates=spec.n_components
    )
    return bound, spec


def utilization(assignments: list[RouterAssignment]) -> list[list[float]]:
    """Per-layer expert selection shares ``f_i``."""
    return [a.fractions.round(6).tolist() for a in assignments]


def validation_mse(
    params: ModelParams,
    config: ModelConfig,
    segment: Segment,
    covariates: CovariateSpec,
    stride: int,
    batch_size: int = 64,
) -> float:
    """MSE of normalized ``H_o``-step predictions over ``segment``."""
    total, count = 0.0, 0
    for batch in iterate_batches(
        segment,
        config.lookback,
        config.horizon_out,
        batch_size=batch_size,
        covariates=covariates,
        stride=stride,
    ):
        pred, _ = model_forward(
            batch.inputs, batch.covariates, config, params, ForwardContext()
        )
        err = pred.data.astype(np.float64) - batch.normalized_targets
        total += float(np.sum(err * err))
        count += err.size
    return total / count


def steps_per_epoch(
    segment: Segment, config: ModelConfig, train_config: TrainConfig
) -> int:
    starts = window_starts(
        segment,
        config.lookback,
        config.horizon_out,
        train_config.train_stride,
    )
    return math.ceil(len(starts) / train_config.batch_size)


def _copy_params(params: ModelParams) -> ModelParams:
    return params.astype(params.dtype)


def train(
    config: ModelConfig,
    params: ModelParams,
    train_segment: Segment,
    train_config: TrainConfig,
    covariates: CovariateSpec,
    val_segment: Optional[Segment] = None,
    out_dir: Optional[Path] = None,
    step_logger: Optional[StepLogger] = None,
    validator: Optional[Validator] = None,
    state: Optional[TrainState] = None,
) -> TrainResult:
    """
    Train ``params`` in place and return the best-on-validation copy.

    Without a validation segment or validator every epoch counts as an
    improvement and the final parameters are returned.

    Passing the ``state`` of an earlier result resumes after its last
    completed epoch with the same moments and generator streams; the
    caller passes back the parameters that run trained in place.

    Raises:
        NumericError: the loss became non-finite; the last good checkpoint
            (if any) stays on disk.
    """
    step_logger = step_logger or StepLogger()
    eval_stride = train_config.eval_stride or config.horizon_out
    if validator is None and val_segment is not None:

        def validator(p: ModelParams) -> float:
            return validation_mse(
                p, config, val_segment, covariates, eval_stride
            )

    per_epoch = steps_per_epoch(train_segment, config, train_config)
    total_steps = per_epoch * train_config.epochs
    if train_config.max_steps is not None:
        total_steps = min(total_steps, train_config.max_steps)
    logger.info(
        f'Training {train_config.epochs} epochs x {per_epoch} steps '
        f'(capped at {total_steps})'
    )

    data_rng = make_generator(train_config.seed, 'data')
    dropout_rng = make_generator(train_config.seed, 'dropout')
    first_epoch = 0
    if state is None:
        state = TrainState()
    else:
        first_epoch = state.epoch + 1
        if state.rng_states:
            data_rng.bit_generator.state = state.rng_states['data']
            dropout_rng.bit_generator.state = state.rng_states['dropout']
        logger.info(f'Resuming at epoch {first_epoch}, step {state.step}')
    history: list[EpochRecord] = []
    best_params = _copy_params(params)
    checkpoint: Optional[Path] = None
    last_assignments: list[RouterAssignment] = []
    stopped_early = False

    for epoch in range(first_epoch, train_config.epochs):
        state.epoch = epoch
        losses: list[float] = []
        hubers: list[float] = []
        lr = 0.0
        for batch in iterate_batches(
            train_segment,
            config.lookback,
            config.horizon_out,
            batch_size=train_config.batch_size,
            covariates=covariates,
            rng=data_rng,
            stride=train_config.train_stride,
        ):
            if state.step >= total_steps:
                break
            lr = lr_schedule(state.step, total_steps, train_config)
            ctx = ForwardContext(training=True, rng=dropout_rng)
            params.zero_grad()
            with Graph() as graph:
                pred, assignments = model_forward(
                    batch.inputs, batch.covariates, config, params, ctx
                )
                loss, huber, balance = total_loss(
                    pred,
                    batch.normalized_targets,
                    assignments,
                    train_config.huber_delta,
                    train_config.balance_alpha,
                    train_config.balance_reduction,
                )
                if not np.isfinite(loss.item()):
                    step_logger.log_event(
                        'diverged', step=state.step, loss=loss.item()
                    )
                    raise NumericError(
                        f'Loss diverged at step {state.step}',
                        op='total_loss',
                        checkpoint=str(checkpoint) if checkpoint else None,
                    )
                graph.backward(loss)

            norm, clipped = None, False
            if train_config.clip_norm is not None:
                norm, clipped = clip_grad_norm(params, train_config.clip_norm)
            adamw_step(params, state, lr, train_config)

            last_assignments = assignments
            losses.append(loss.item())
            hubers.append(huber.item())
            step_logger.log_step(
                step=state.step,
                epoch=epoch,
                lr=lr,
                huber=huber.item(),
                balance=balance.item(),
                total=loss.item(),
                f_histogram=utilization(assignments),
                grad_norm=norm,
                clipped=clipped,
            )

        if not losses:
            break
        state.rng_states = {
            'data': data_rng.bit_generator.state,
            'dropout': dropout_rng.bit_generator.state,
        }
        val_mse = validator(params) if validator is not None else None
        improved = val_mse is None or val_mse < state.best_val_mse
        if improved:
            if val_mse is not None:
                state.best_val_mse = val_mse
            state.epochs_since_improvement = 0
            best_params = _copy_params(params)
            if out_dir is not None:
                checkpoint = save_checkpoint(
                    Path(out_dir) / 'best',
                    config,
                    best_params,
                    meta={'epoch': epoch, 'val_mse': val_mse},
                )
        else:
            state.epochs_since_improvement += 1

        history.append(
            EpochRecord(
                epoch=epoch,
                train_loss=float(np.mean(losses)),
                val_mse=val_mse,
                lr=lr,
                steps=state.step,
                train_huber=float(np.mean(hubers)),
            )
        )
        step_logger.log_epoch(
            epoch=epoch,
            val_mse=val_mse,
            best_val_mse=state.best_val_mse,
            epochs_since_improvement=state.epochs_since_improvement,
        )
        logger.info(
            f'Epoch {epoch}: loss {history[-1].train_loss:.4f}, '
            f'val {val_mse if val_mse is None else round(val_mse, 4)}'
        )
        if state.epochs_since_improvement >= train_config.patience:
            stopped_early = True
            step_logger.log_event('early_stop', epoch=epoch)
            break
        if state.step >= total_steps:
            break

    if out_dir is not None:
        save_checkpoint(Path(out_dir) / 'final', config, params)
    return TrainResult(
        params=best_params,
        state=state,
        history=history,
        utilization=utilization(last_assignments),
        stopped_early=stopped_early,
        checkpoint=checkpoint,
    )
