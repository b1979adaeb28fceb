"""``mohets`` command-line entry point."""

import argparse
import sys
from typing import Optional, Sequence

from threadpoolctl import threadpool_limits

from src.cli import commands
from src.common.config import get_settings
from src.common.logging_config import configure_logging
from src.common.utils import handle_errors
from src.experiments.schemas import ABLATION_VARIANTS
from src.experiments.service import GRADCHECK_PROBES
from src.inference.service import DEFAULT_HORIZONS

HORIZONS = ','.join(str(h) for h in DEFAULT_HORIZONS)
SYNTHETIC_POINTS = 2000


def _global_flags() -> argparse.ArgumentParser:
    settings = get_settings()
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument(
        '--threads',
        type=int,
        default=settings.MOHETS_THREADS,
        help='BLAS threads; 1 is the deterministic mode',
    )
    parent.add_argument('--log-level', default=None)
    parent.add_argument(
        '--out', default=None, help='run directory for every artifact'
    )
    parent.add_argument(
        '--seed', type=int, default=None, help='defaults to MOHETS_SEED'
    )
    return parent


def _model_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('model')
    group.add_argument('--preset', default=None)
    group.add_argument('--config', default=None, help='JSON config file')
    group.add_argument('--patch', type=int)
    group.add_argument('--hout', type=int, help='output resolution H_o')
    group.add_argument('--lookback', type=int)
    group.add_argument(
        '--shared-expert', choices=['dwconv', 'conv', 'mlp', 'fa']
    )
    group.add_argument('--routed-expert', choices=['fa', 'mlp'])
    group.add_argument(
        '--norm-scheme', choices=['mixed', 'layernorm', 'rmsnorm']
    )
    group.add_argument('--head', choices=['conv', 'mlp'])
    group.add_argument('--dropout', type=float)
    group.add_argument('--drop-path', type=float)
    group.add_argument('--no-covariates', action='store_true')


def _train_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('training')
    group.add_argument('--epochs', type=int)
    group.add_argument('--batch-size', type=int)
    group.add_argument('--max-lr', type=float)
    group.add_argument('--min-lr', type=float)
    group.add_argument('--max-steps', type=int)
    group.add_argument('--train-stride', type=int)
    group.add_argument('--eval-stride', type=int)
    group.add_argument('--alpha', type=float, help='balance loss weight')
    group.add_argument('--patience', type=int)
    group.add_argument('--no-clip', action='store_true')


def _eval_flags(
    parser: argparse.ArgumentParser, data_required: bool, rollout: bool = True
) -> None:
    parser.add_argument('--data', required=data_required)
    parser.add_argument('--horizons', default=HORIZONS)
    if not rollout:
        return
    parser.add_argument(
        '--normalization',
        choices=['per_chunk', 'per_window'],
        default='per_chunk',
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='mohets',
        description='Sparse mixture-of-experts forecaster for multivariate '
        'time series',
    )
    sub = parser.add_subparsers(dest='command', required=True)
    parent = _global_flags()

    train = sub.add_parser('train', parents=[parent], help='train a model')
    train.add_argument('--data', required=True)
    _model_flags(train)
    _train_flags(train)
    train.set_defaults(handler=commands.cmd_train)

    evaluate = sub.add_parser(
        'eval', parents=[parent], help='metric table on the test split'
    )
    evaluate.add_argument('--checkpoint', required=True)
    _eval_flags(evaluate, data_required=True)
    evaluate.add_argument('--stride', type=int, help='defaults to H_o')
    evaluate.set_defaults(handler=commands.cmd_eval)

    forecast = sub.add_parser(
        'forecast', parents=[parent], help='roll out from the series tail'
    )
    forecast.add_argument('--checkpoint', required=True)
    forecast.add_argument('--data', required=True)
    forecast.add_argument('--horizon', type=int, required=True)
    forecast.add_argument('--plot', action='store_true')
    forecast.add_argument(
        '--normalization',
        choices=['per_chunk', 'per_window'],
        default='per_chunk',
    )
    forecast.set_defaults(handler=commands.cmd_forecast)

    ablate = sub.add_parser(
        'ablate', parents=[parent], help='compare architecture variants'
    )
    ablate.add_argument(
        '--axis', required=True, choices=list(ABLATION_VARIANTS)
    )
    _eval_flags(ablate, data_required=False, rollout=False)
    ablate.add_argument(
        '--synthetic-points', type=int, default=SYNTHETIC_POINTS
    )
    _model_flags(ablate)
    _train_flags(ablate)
    ablate.set_defaults(handler=commands.cmd_ablate)

    sweep = sub.add_parser(
        'sweep', parents=[parent], help='output-resolution or size sweep'
    )
    sweep.add_argument('--axis', required=True, choices=['horizon', 'scale'])
    _eval_flags(sweep, data_required=False, rollout=False)
    sweep.add_argument(
        '--synthetic-points', type=int, default=SYNTHETIC_POINTS
    )
    _model_flags(sweep)
    _train_flags(sweep)
    sweep.set_defaults(handler=commands.cmd_sweep)

    gradcheck = sub.add_parser(
        'gradcheck', parents=[parent], help='verify analytic gradients'
    )
    gradcheck.add_argument('--preset', default='tiny')
    gradcheck.add_argument('--probes', type=int, default=GRADCHECK_PROBES)
    gradcheck.set_defaults(handler=commands.cmd_gradcheck)

    baselines = sub.add_parser(
        'baselines', parents=[parent], help='naive forecast baselines'
    )
    baselines.add_argument('--data', required=True)
    baselines.add_argument('--horizons', default=HORIZONS)
    baselines.add_argument('--lookback', type=int)
    baselines.add_argument('--stride', type=int)
    baselines.set_defaults(handler=commands.cmd_baselines)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    with threadpool_limits(limits=args.threads):
        return handle_errors(args.handler, args)


if __name__ == '__main__':
    sys.exit(main())
