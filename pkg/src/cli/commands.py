"""Command bodies. Each raises MohetsError subclasses for known failures."""

import logging
from argparse import Namespace
from pathlib import Path
from typing import Optional

import orjson
import pandas as pd

from src.cli.service import (
    manifest_path,
    read_config_file,
    resolve_model_config,
    resolve_seed,
    resolve_train_config,
    run_directory,
    write_manifest,
)
from src.common.exceptions import DataError, NumericError
from src.common.monitoring import PerformanceMonitor
from src.common.step_logger import StepLogger
from src.common.utils import parse_int_list
from src.data.datasets import (
    get_dataset_info,
    seasonal_period,
    split_for,
    synthetic_multisine,
    write_split_manifest,
)
from src.data.schemas import CovariateSpec, TimeSeriesFrame
from src.data.service import (
    calendar_covariates,
    chronological_split,
    load_csv,
)
from src.experiments.service import (
    fit_model,
    horizon_sweep,
    run_ablation,
    run_gradcheck,
    scale_sweep,
)
from src.inference.export import (
    plot_forecast_svg,
    write_forecast_csv,
    write_metrics_csv,
    write_table_csv,
)
from src.inference.service import (
    evaluate_horizons,
    fit_scaler,
    naive_baselines,
    rollout,
)
from src.model.checkpoint import load_checkpoint, save_checkpoint
from src.model.network import count_parameters
from src.model.schemas import ModelConfig

logger = logging.getLogger(__name__)


def frame_name(path: Optional[str]) -> str:
    return Path(path).stem if path else 'synthetic'


def _load_frame(args: Namespace) -> TimeSeriesFrame:
    if getattr(args, 'data', None):
        return load_csv(args.data)
    logger.info(
        f'No --data given; using a {args.synthetic_points}-point synthetic '
        'multi-sine series'
    )
    return synthetic_multisine(
        args.synthetic_points, seed=resolve_seed(args)
    )


def _covariates_for(
    config: ModelConfig, frame: TimeSeriesFrame
) -> CovariateSpec:
    """The calendar features a loaded model expects, checked against data."""
    if config.covariates_active:
        if frame.n_variates != config.n_variates:
            raise DataError(
                f'Checkpoint fuses {config.n_variates} variates but the data '
                f'has {frame.n_variates}',
                required=config.n_variates,
            )
        spec = CovariateSpec.for_frequency(frame.freq)
        if spec.n_components != config.n_covariates:
            raise DataError(
                f'Checkpoint expects {config.n_covariates} calendar features; '
                f'data at {frame.freq} provides {spec.n_components}',
            )
        return spec
    return CovariateSpec.disabled()


def _print_table(records: list[dict]) -> None:
    print(pd.DataFrame(records).to_string(index=False))


def cmd_train(args: Namespace) -> None:
    monitor = PerformanceMonitor()
    run_dir = run_directory(args)
    info = get_dataset_info(args.data)
    file_config = read_config_file(args.config)
    with monitor.track('load'):
        frame = load_csv(args.data)
    config = resolve_model_config(args, info, file_config)
    train_config = resolve_train_config(args, info, file_config)
    split_path = write_split_manifest(
        run_dir / 'split.json',
        frame_name(args.data),
        split_for(frame, args.data),
        config.lookback,
        config.horizon_out,
        train_config.seed,
    )

    log_path = run_dir / 'train_log.jsonl'
    with StepLogger(log_path) as step_logger, monitor.track('train'):
        outcome = fit_model(
            frame,
            config,
            train_config,
            dataset=args.data,
            out_dir=run_dir,
            step_logger=step_logger,
        )

    activated, total = count_parameters(outcome.config)
    checkpoint = save_checkpoint(
        run_dir / 'checkpoint',
        outcome.config,
        outcome.params,
        meta={
            'dataset': frame_name(args.data),
            'seed': train_config.seed,
            'best_val_mse': outcome.result.state.best_val_mse,
            'utilization': outcome.result.utilization,
        },
    )
    logger.info(
        f'Trained {activated} of {total} parameters per token; final loss '
        f'{outcome.result.final_loss:.4f}; checkpoint at {checkpoint}'
    )
    write_manifest(
        run_dir,
        args,
        {
            'model': outcome.config.model_dump(),
            'train': train_config.model_dump(),
            'data': {'path': args.data, 'variates': frame.n_variates},
        },
        {'checkpoint': checkpoint, 'log': log_path, 'split': split_path},
        monitor,
    )


def cmd_eval(args: Namespace) -> None:
    monitor = PerformanceMonitor()
    run_dir = run_directory(args)
    horizons = parse_int_list(args.horizons, 'horizons')
    config, params, _ = load_checkpoint(args.checkpoint)
    with monitor.track('load'):
        frame = load_csv(args.data)
    covariates = _covariates_for(config, frame)
    splits = chronological_split(
        frame, split_for(frame, args.data), context=config.lookback
    )
    with monitor.track('evaluate'):
        table = evaluate_horizons(
            config,
            params,
            splits.test,
            covariates,
            horizons=horizons,
            stride=args.stride,
            scaler=fit_scaler(splits.train),
            normalization=args.normalization,
            dataset=frame_name(args.data),
            seed=resolve_seed(args),
        )
    metrics = write_metrics_csv(
        table, run_dir / 'metrics.csv', manifest_path(run_dir)
    )
    _print_table([row.as_dict() for row in table.rows])
    write_manifest(
        run_dir,
        args,
        {'model': config.model_dump(), 'data': {'path': args.data}},
        {'metrics': metrics},
        monitor,
    )


def cmd_forecast(args: Namespace) -> None:
    monitor = PerformanceMonitor()
    run_dir = run_directory(args)
    config, params, _ = load_checkpoint(args.checkpoint)
    with monitor.track('load'):
        frame = load_csv(args.data)
    if frame.length < config.lookback:
        raise DataError(
            f'Series has {frame.length} points; forecasting needs at least '
            f'L={config.lookback}',
            required=config.lookback,
        )
    covariates = _covariates_for(config, frame)
    history = frame.values[:, -config.lookback:]
    future = frame.future_timestamps(args.horizon)
    calendar = None
    if config.covariates_active:
        stamps = frame.timestamps[-config.lookback:].append(future)
        calendar = calendar_covariates(stamps, covariates)
    with monitor.track('forecast'):
        result = rollout(
            config,
            params,
            history,
            args.horizon,
            covariates=calendar,
            normalization=args.normalization,
        )
    logger.info(
        f'Forecast {args.horizon} steps in {result.iterations} chunks '
        f'({result.wall_clock:.2f}s)'
    )
    outputs = {
        'forecast': write_forecast_csv(
            result,
            future,
            frame.names,
            run_dir / 'forecast.csv',
            manifest_path(run_dir),
        )
    }
    if args.plot:
        paths = plot_forecast_svg(
            result, frame.names, run_dir / 'plots', history=history
        )
        outputs.update({f'plot_{i}': p for i, p in enumerate(paths)})
    write_manifest(
        run_dir,
        args,
        {'model': config.model_dump(), 'data': {'path': args.data}},
        outputs,
        monitor,
    )


def _experiment_inputs(args: Namespace):
    info = get_dataset_info(args.data) if args.data else None
    file_config = read_config_file(args.config)
    frame = _load_frame(args)
    config = resolve_model_config(args, info, file_config)
    train_config = resolve_train_config(args, info, file_config)
    return frame, config, train_config


def _write_comparison(
    args: Namespace,
    rows,
    name: str,
    config: ModelConfig,
    train_config,
    monitor: PerformanceMonitor,
) -> None:
    run_dir = run_directory(args)
    records = [row.as_dict() for row in rows]
    table = write_table_csv(
        records, run_dir / f'{name}.csv', manifest_path(run_dir)
    )
    _print_table(records)
    write_manifest(
        run_dir,
        args,
        {
            'model': config.model_dump(),
            'train': train_config.model_dump(),
            'data': {'path': args.data or 'synthetic'},
        },
        {name: table},
        monitor,
    )


def cmd_ablate(args: Namespace) -> None:
    monitor = PerformanceMonitor()
    frame, config, train_config = _experiment_inputs(args)
    horizons = parse_int_list(args.horizons, 'horizons')
    with monitor.track('ablate'):
        rows = run_ablation(
            frame,
            args.axis,
            config,
            train_config,
            horizons=horizons,
            dataset=args.data,
            out_dir=run_directory(args) / 'variants',
        )
    _write_comparison(
        args, rows, f'ablation_{args.axis}', config, train_config, monitor
    )


def cmd_sweep(args: Namespace) -> None:
    monitor = PerformanceMonitor()
    frame, config, train_config = _experiment_inputs(args)
    horizons = parse_int_list(args.horizons, 'horizons')
    sweep = horizon_sweep if args.axis == 'horizon' else scale_sweep
    with monitor.track('sweep'):
        rows = sweep(
            frame,
            config,
            train_config,
            horizons=horizons,
            dataset=args.data,
            out_dir=run_directory(args) / 'variants',
        )
    _write_comparison(
        args, rows, f'sweep_{args.axis}', config, train_config, monitor
    )


def cmd_gradcheck(args: Namespace) -> None:
    monitor = PerformanceMonitor()
    run_dir = run_directory(args)
    with monitor.track('gradcheck'):
        summary = run_gradcheck(
            args.preset or 'tiny', resolve_seed(args), args.probes
        )
    report = run_dir / 'gradcheck.json'
    report.write_bytes(
        orjson.dumps(summary.to_dict(), option=orjson.OPT_INDENT_2)
    )
    print(
        f'gradcheck {"PASS" if summary.passed else "FAIL"}: '
        f'max rel error {summary.max_rel_error:.3e}, '
        f'{summary.model.probes} model probes, h={summary.model.h:g}'
    )
    write_manifest(
        run_dir,
        args,
        {'preset': args.preset or 'tiny', 'probes': args.probes},
        {'report': report},
        monitor,
    )
    if not summary.passed:
        raise NumericError(
            f'Gradient check failed for {", ".join(summary.failures)}',
            op=summary.failures[0],
        )


def cmd_baselines(args: Namespace) -> None:
    monitor = PerformanceMonitor()
    run_dir = run_directory(args)
    horizons = parse_int_list(args.horizons, 'horizons')
    with monitor.track('load'):
        frame = load_csv(args.data)
    info = get_dataset_info(args.data)
    lookback = args.lookback or 672
    stride = args.stride or (info.horizon_out if info else 24)
    splits = chronological_split(
        frame, split_for(frame, args.data), context=lookback
    )
    with monitor.track('evaluate'):
        table = naive_baselines(
            splits.test,
            lookback,
            horizons=horizons,
            period=seasonal_period(frame.freq),
            stride=stride,
            scaler=fit_scaler(splits.train),
            dataset=frame_name(args.data),
            seed=resolve_seed(args),
        )
    metrics = write_metrics_csv(
        table, run_dir / 'baselines.csv', manifest_path(run_dir)
    )
    _print_table([row.as_dict() for row in table.rows])
    write_manifest(
        run_dir,
        args,
        {'data': {'path': args.data}, 'lookback': lookback, 'stride': stride},
        {'baselines': metrics},
        monitor,
    )

