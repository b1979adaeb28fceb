from dataclasses import dataclass, field
from typing import Any, Literal, Optional

from src.data.schemas import CovariateSpec, NormStats, SplitSegments
from src.model.network import ModelParams
from src.model.schemas import ModelConfig
from src.tensor.gradcheck import GradCheckReport
from src.training.schemas import TrainResult

AblationAxis = Literal['experts', 'norm', 'head', 'covariates']
SweepAxis = Literal['horizon', 'scale']

# (label, ModelConfig overrides)
ABLATION_VARIANTS: dict[str, list[tuple[str, dict[str, Any]]]] = {
    'experts': [
        ('MoHE', {'shared_expert': 'dwconv', 'routed_expert': 'fa'}),
        ('MLP', {'shared_expert': 'mlp', 'routed_expert': 'mlp'}),
        ('FA', {'shared_expert': 'fa', 'routed_expert': 'fa'}),
        ('Conv+MLP', {'shared_expert': 'conv', 'routed_expert': 'mlp'}),
        ('Conv+FA', {'shared_expert': 'conv', 'routed_expert': 'fa'}),
        ('DwConv+MLP', {'shared_expert': 'dwconv', 'routed_expert': 'mlp'}),
    ],
    'norm': [
        ('mixed', {'norm_scheme': 'mixed'}),
        ('layernorm', {'norm_scheme': 'layernorm'}),
        ('rmsnorm', {'norm_scheme': 'rmsnorm'}),
    ],
    'head': [
        ('conv head', {'head': 'conv'}),
        ('mlp head', {'head': 'mlp'}),
    ],
    'covariates': [
        ('with covariates', {'use_covariates': True}),
        ('w/o covariates', {'use_covariates': False}),
    ],
}

SWEEP_OUTPUT_HORIZONS = (8, 16, 24, 32)
SWEEP_PRESETS = ('tiny', 'small', 'base', 'large')

# Parameter-name fragments of the Fourier layers
FOURIER_MARKERS = ('.w_p', '.w_pbar', '.b_pbar')


@dataclass
class FitOutcome:
    """A trained model together with the data plumbing it was fit on."""

    config: ModelConfig
    covariates: CovariateSpec
    params: ModelParams
    splits: SplitSegments
    scaler: NormStats
    result: TrainResult
    seconds: float = 0.0
    seed: int = 0


@dataclass
class GradCheckSummary:
    model: GradCheckReport
    primitives: dict[str, GradCheckReport] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def failures(self) -> list[str]:
        failed = [
            name
            for name, report in self.primitives.items()
            if not report.passed(self.tolerance)
        ]
        if not self.model.passed(self.tolerance):
            failed.append('model')
        return failed

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def max_rel_error(self) -> float:
        return max(
            [self.model.max_rel_error]
            + [r.max_rel_error for r in self.primitives.values()]
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            'passed': self.passed,
            'tolerance': self.tolerance,
            'max_rel_error': self.max_rel_error,
            'failures': self.failures,
            'model': self.model.to_dict(),
            'primitives': {
                name: report.to_dict()
                for name, report in self.primitives.items()
            },
        }


@dataclass
class ComparisonRow:
    """One variant of an ablation or sweep."""

    axis: str
    variant: str
    activated_params: int
    total_params: int
    fourier_params: int
    mse: float
    mae: float
    train_loss: float
    train_seconds: float
    eval_seconds: float
    horizon_out: Optional[int] = None
    patch: Optional[int] = None
    d_model: Optional[int] = None
    seed: int = 0

    def as_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)
