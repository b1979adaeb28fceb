"""
Training runs composed into experiments: single fits, ablations, sweeps and
the gradient-check suite.
"""

import logging
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from src.common.exceptions import ConfigurationError, DataError
from src.common.monitoring import PerformanceMonitor
from src.common.step_logger import StepLogger
from src.data.datasets import split_for
from src.data.schemas import DAILY_COMPONENTS, TimeSeriesFrame
from src.data.service import chronological_split, window_starts
from src.experiments.schemas import (
    ABLATION_VARIANTS,
    FOURIER_MARKERS,
    SWEEP_OUTPUT_HORIZONS,
    SWEEP_PRESETS,
    ComparisonRow,
    FitOutcome,
    GradCheckSummary,
)
from src.inference.schemas import MetricTable, NormalizationMode
from src.inference.service import (
    DEFAULT_HORIZONS,
    evaluate_horizons,
    fit_scaler,
)
from src.model.network import (
    ModelParams,
    count_parameters,
    init_params,
    model_forward,
)
from src.model.schemas import PRESETS, ForwardContext, ModelConfig
from src.tensor import ops
from src.tensor.gradcheck import (
    DEFAULT_STEP,
    GradCheckReport,
    grad_check,
    sample_coordinates,
)
from src.tensor.random import make_generator
from src.tensor.tensor import Tensor, default_dtype
from src.training.losses import total_loss
from src.training.schemas import TrainConfig
from src.training.service import bind_config, train

logger = logging.getLogger(__name__)

MODEL_NAME = 'mohets'

GRADCHECK_SHAPE = {'lookback': 32, 'patch': 8, 'horizon_out': 24}
GRADCHECK_PROBES = 64
GRADCHECK_TOLERANCE = 1e-4
# Every model check probes at least one coordinate of each
REQUIRED_PROBES = ('router.w', '.experts.', 'shared_gate.w', 'head.', '.w_p')


def fit_model(
    frame: TimeSeriesFrame,
    config: ModelConfig,
    train_config: TrainConfig,
    dataset: Optional[str] = None,
    out_dir: Optional[Path] = None,
    step_logger: Optional[StepLogger] = None,
) -> FitOutcome:
    """Split, bind, initialize and train one model on ``frame``."""
    spec = split_for(frame, dataset)
    splits = chronological_split(frame, spec, context=config.lookback)
    bound, covariates = bind_config(config, frame)
    params = init_params(bound, train_config.seed)

    val_segment = splits.val
    try:
        window_starts(val_segment, bound.lookback, bound.horizon_out)
    except DataError as e:
        logger.warning(f'Validation disabled: {e.detail}')
        val_segment = None

    start = time.perf_counter()
    result = train(
        bound,
        params,
        splits.train,
        train_config,
        covariates,
        val_segment=val_segment,
        out_dir=out_dir,
        step_logger=step_logger,
    )
    return FitOutcome(
        config=bound,
        covariates=covariates,
        params=result.params,
        splits=splits,
        scaler=fit_scaler(splits.train),
        result=result,
        seconds=time.perf_counter() - start,
        seed=train_config.seed,
    )


def evaluate_fit(
    outcome: FitOutcome,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    normalization: NormalizationMode = 'per_chunk',
    dataset: str = 'data',
    model: str = MODEL_NAME,
    stride: Optional[int] = None,
) -> MetricTable:
    """Test-split metrics in the training split's standardized units."""
    return evaluate_horizons(
        outcome.config,
        outcome.params,
        outcome.splits.test,
        outcome.covariates,
        horizons=horizons,
        stride=stride,
        scaler=outcome.scaler,
        normalization=normalization,
        dataset=dataset,
        model=model,
        seed=outcome.seed,
    )


def fourier_parameter_count(params: ModelParams) -> int:
    return sum(
        t.size
        for name, t in params.items()
        if any(marker in name for marker in FOURIER_MARKERS)
    )


def _run_variant(
    frame: TimeSeriesFrame,
    axis: str,
    label: str,
    config: ModelConfig,
    train_config: TrainConfig,
    horizons: Sequence[int],
    dataset: Optional[str],
    out_dir: Optional[Path],
) -> ComparisonRow:
    logger.info(f'{axis}: training variant {label!r}')
    monitor = PerformanceMonitor()
    variant_dir = None
    if out_dir is not None:
        variant_dir = Path(out_dir) / _slug(label)
    log_path = variant_dir / 'train_log.jsonl' if variant_dir else None
    with StepLogger(log_path) as step_logger, monitor.track('train'):
        outcome = fit_model(
            frame, config, train_config, dataset, variant_dir, step_logger
        )
    with monitor.track('evaluate'):
        table = evaluate_fit(
            outcome, horizons, dataset=dataset or 'data', model=label
        )
    average = table.get(label, 'avg')
    activated, total = count_parameters(outcome.config)
    return ComparisonRow(
        axis=axis,
        variant=label,
        activated_params=activated,
        total_params=total,
        fourier_params=fourier_parameter_count(outcome.params),
        mse=average.mse,
        mae=average.mae,
        train_loss=outcome.result.final_loss,
        train_seconds=monitor.elapsed('train'),
        eval_seconds=monitor.elapsed('evaluate'),
        horizon_out=outcome.config.horizon_out,
        patch=outcome.config.patch,
        d_model=outcome.config.d_model,
        seed=train_config.seed,
    )


def _slug(label: str) -> str:
    return ''.join(c if c.isalnum() else '_' for c in label.lower())


def run_ablation(
    frame: TimeSeriesFrame,
    axis: str,
    config: ModelConfig,
    train_config: TrainConfig,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    dataset: Optional[str] = None,
    out_dir: Optional[Path] = None,
) -> list[ComparisonRow]:
    """Train every variant of ``axis`` under the same seed."""
    if axis not in ABLATION_VARIANTS:
        raise ConfigurationError(
            f'Unknown ablation axis {axis!r}; choose from '
            f'{", ".join(ABLATION_VARIANTS)}',
            key='axis',
        )
    return [
        _run_variant(
            frame,
            axis,
            label,
            config.updated(**overrides),
            train_config,
            horizons,
            dataset,
            out_dir,
        )
        for label, overrides in ABLATION_VARIANTS[axis]
    ]


def horizon_sweep(
    frame: TimeSeriesFrame,
    config: ModelConfig,
    train_config: TrainConfig,
    output_horizons: Sequence[int] = SWEEP_OUTPUT_HORIZONS,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    dataset: Optional[str] = None,
    out_dir: Optional[Path] = None,
) -> list[ComparisonRow]:
    """One training run per output resolution ``H_o`` at a fixed patch."""
    rows = []
    for horizon_out in output_horizons:
        variant = config.updated(horizon_out=horizon_out)
        rows.append(
            _run_variant(
                frame,
                'horizon',
                f'H_o={horizon_out}',
                variant,
                train_config,
                horizons,
                dataset,
                out_dir,
            )
        )
    return rows


def scale_sweep(
    frame: TimeSeriesFrame,
    config: ModelConfig,
    train_config: TrainConfig,
    presets: Sequence[str] = SWEEP_PRESETS,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    dataset: Optional[str] = None,
    out_dir: Optional[Path] = None,
) -> list[ComparisonRow]:
    """Train each preset with the non-architectural fields of ``config``."""
    sized = set(PRESETS['tiny']) | {'n_variates', 'n_covariates'}
    carried = config.model_dump(exclude=sized)
    return [
        _run_variant(
            frame,
            'scale',
            preset,
            ModelConfig.from_preset(preset, **carried),
            train_config,
            horizons,
            dataset,
            out_dir,
        )
        for preset in presets
    ]


# --- gradient checks ---


def _project(y: Tensor) -> Tensor:
    """A fixed, non-symmetric linear functional so every output matters."""
    w = np.cos(1.0 + np.arange(y.size)).reshape(y.shape)
    return (y * Tensor(w, dtype=y.dtype)).sum()


def _primitive_cases(
    rng: np.random.Generator,
) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    def leaf(*shape: int, low: float = -1.0, high: float = 1.0) -> Tensor:
        data = rng.uniform(low, high, shape)
        return Tensor(data, requires_grad=True, dtype=np.float64)

    a, b, c = leaf(3, 4), leaf(4, 5), leaf(4)
    pos = leaf(3, 4, low=0.5, high=2.0)
    signed = leaf(3, 4, low=0.2, high=1.0)
    signed.data[::2] *= -1.0
    mask = rng.random((3, 4)) > 0.5
    x_conv, k_dw = leaf(2, 3, 8), leaf(3, 3)
    x_up, k_up = leaf(2, 3, 4), leaf(3, 2, 4)
    rows = np.array([0, 2, 2, 1])

    return {
        'arithmetic': (
            lambda: _project(a * c + a / (c * c + 1.0) - c), [a, c]
        ),
        'matmul': (lambda: _project(a @ b), [a, b]),
        'exp': (lambda: _project(ops.exp(a)), [a]),
        'log': (lambda: _project(ops.log(pos)), [pos]),
        'sqrt': (lambda: _project(ops.sqrt(pos)), [pos]),
        'sin_cos': (lambda: _project(ops.sin(a) * ops.cos(a)), [a]),
        'abs': (lambda: _project(ops.abs(signed)), [signed]),
        'sigmoid': (lambda: _project(ops.sigmoid(a)), [a]),
        'gelu': (lambda: _project(ops.gelu(a)), [a]),
        'softmax': (lambda: _project(ops.softmax(a)), [a]),
        'where': (lambda: _project(ops.where(mask, a, a * a)), [a]),
        'reductions': (
            lambda: _project(a.mean(axis=0) + a.var(axis=0) + a.sum(axis=0)),
            [a],
        ),
        'structural': (
            lambda: _project(
                ops.concat([a.transpose(1, 0)[1:3], b[:2, :3]], axis=0)
            ),
            [a, b],
        ),
        'take_scatter': (
            lambda: _project(ops.scatter_add(ops.take(a, rows), rows, 4)),
            [a],
        ),
        'depthwise_conv1d': (
            lambda: _project(ops.depthwise_conv1d(x_conv, k_dw)),
            [x_conv, k_dw],
        ),
        'transpose_conv1d': (
            lambda: _project(ops.transpose_conv1d(x_up, k_up, stride=4)),
            [x_up, k_up],
        ),
    }


def gradcheck_primitives(
    seed: int, h: float = DEFAULT_STEP
) -> dict[str, GradCheckReport]:
    rng = make_generator(seed, 'gradcheck')
    with default_dtype(np.float64):
        return {
            name: grad_check(fn, inputs, h)
            for name, (fn, inputs) in _primitive_cases(rng).items()
        }


def gradcheck_model(
    preset: str = 'tiny',
    seed: int = 0,
    probes: int = GRADCHECK_PROBES,
    h: float = DEFAULT_STEP,
    n_variates: int = 2,
    batch: int = 2,
) -> GradCheckReport:
    """
    Check the full forward pass and training loss of a 64-bit model built
    from ``preset`` with a short look-back.
    """
    with default_dtype(np.float64):
        return _gradcheck_model(preset, seed, probes, h, n_variates, batch)


def _gradcheck_model(
    preset: str, seed: int, probes: int, h: float, n_variates: int, batch: int
) -> GradCheckReport:
    config = ModelConfig.from_preset(
        preset,
        **GRADCHECK_SHAPE,
        n_variates=n_variates,
        n_covariates=len(DAILY_COMPONENTS),
    )
    rng = make_generator(seed, 'gradcheck')
    params = init_params(config, seed, dtype=np.float64)
    x = rng.standard_normal((batch, n_variates, config.lookback))
    z = rng.uniform(-0.5, 0.5, (batch, config.n_covariates, config.lookback))
    target = rng.standard_normal((batch, n_variates, config.horizon_out))

    def loss() -> Tensor:
        pred, assignments = model_forward(
            x, z, config, params, ForwardContext()
        )
        return total_loss(pred, target, assignments)[0]

    tensors = dict(params.items())
    coordinates = sample_coordinates(
        tensors, probes, rng, required=REQUIRED_PROBES
    )
    report = grad_check(loss, tensors, h, coordinates)
    logger.info(
        f'Model gradient check ({preset}): {report.probes} probes, '
        f'max rel error {report.max_rel_error:.3e}'
    )
    return report


def run_gradcheck(
    preset: str = 'tiny',
    seed: int = 0,
    probes: int = GRADCHECK_PROBES,
    tolerance: float = GRADCHECK_TOLERANCE,
) -> GradCheckSummary:
    return GradCheckSummary(
        model=gradcheck_model(preset, seed, probes),
        primitives=gradcheck_primitives(seed),
        tolerance=tolerance,
    )
