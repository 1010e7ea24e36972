"""Desk-scale on-policy knowledge distillation with a veto target.

The target mixes teacher and student in logit space,
Q = softmax(z_T + beta * z_S), so the student's own uncertainty gates
(vetoes) the teacher's signal on tokens the student considers nearly
impossible. The package provides the losses with exact gradients, beta
schedules, tabular policies on synthetic tasks, the training loop, and
independent numerical oracles for the objective's limit claims.
"""

from .dist import Categorical, entropy, kl_divergence, normalize, sharpen
from .errors import (
    ConfigError,
    DivergentKL,
    InvalidBeta,
    InvalidLogits,
    InvalidProbability,
    InvalidTemperature,
    InvalidToken,
    OracleProbeFailure,
    ShapeError,
    StepOutOfRange,
    VetoInvariantViolation,
    VetoKDError,
)
from .estimator import VetoDistiller, build_student, default_beta_init
from .objective import (
    TokenLossRecord,
    VetoTarget,
    advantage,
    forward_veto_loss,
    is_ignorant_token,
    mix_logits,
    reinforce_gradient_exact,
    reinforce_gradient_mc,
    reverse_veto_loss,
    veto_token_loss_limit,
)
from .policy import (
    SyntheticTask,
    TabularPolicy,
    Trajectory,
    greedy_decode,
    make_teacher,
    sample_trajectory,
    task_accuracy,
)
from .schedule import BetaSchedule, beta_at
from .training import (
    GridCell,
    MetricsRecord,
    TrainConfig,
    compare_objectives,
    train,
    train_step,
)
from .verify import (
    FixedPointResult,
    finite_difference_grad,
    fixed_point_iterate,
    run_suites,
    theorem1_sweep,
    theorem2_suite,
    theorem3_suite,
)

__version__ = "0.1.0"

__all__ = [
    "BetaSchedule",
    "Categorical",
    "ConfigError",
    "DivergentKL",
    "FixedPointResult",
    "GridCell",
    "InvalidBeta",
    "InvalidLogits",
    "InvalidProbability",
    "InvalidTemperature",
    "InvalidToken",
    "MetricsRecord",
    "OracleProbeFailure",
    "ShapeError",
    "StepOutOfRange",
    "SyntheticTask",
    "TabularPolicy",
    "TokenLossRecord",
    "TrainConfig",
    "Trajectory",
    "VetoDistiller",
    "VetoInvariantViolation",
    "VetoKDError",
    "VetoTarget",
    "advantage",
    "beta_at",
    "build_student",
    "compare_objectives",
    "default_beta_init",
    "entropy",
    "finite_difference_grad",
    "fixed_point_iterate",
    "forward_veto_loss",
    "greedy_decode",
    "is_ignorant_token",
    "kl_divergence",
    "make_teacher",
    "mix_logits",
    "normalize",
    "reinforce_gradient_exact",
    "reinforce_gradient_mc",
    "reverse_veto_loss",
    "run_suites",
    "sample_trajectory",
    "sharpen",
    "task_accuracy",
    "theorem1_sweep",
    "theorem2_suite",
    "theorem3_suite",
    "train",
    "train_step",
    "veto_token_loss_limit",
]
