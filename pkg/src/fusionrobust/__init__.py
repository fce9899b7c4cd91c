"""Robustness of multi-source fusion models to single-source corruption.

Closed-form analysis of the two-source linear fusion model under random
and adversarial single-source perturbations, a small reverse-mode
differentiation core, fusion layers (mean, concatenation, learned
ensemble), corruption-aware training procedures, and a configuration
driven experiment command line.
"""

from .adversarial import (
    AdvSolution,
    AdvSpec,
    adv_gap_condition,
    adv_reduced_objective,
    fgs_attack,
    oracle_minimax_l1,
    solve_maxssn_adv,
)
from .corruption import (
    CorruptionSpec,
    MultiSourceDataset,
    RobustnessReport,
    SyntheticTask,
    corrupt,
    default_tau,
    evaluate_metric,
    evaluate_robustness,
    make_task,
)
from .errors import (
    ConfigurationError,
    ConvergenceError,
    FusionRobustError,
    PreconditionError,
    ShapeError,
    StateError,
    TrainingDivergedError,
)
from .linear import (
    FusionSolution,
    LatentSpec,
    LinearDataset,
    expected_ssn_loss,
    generate_linear_data,
    maxssn_gap_bound,
    oracle_minimax,
    predict_fdir,
    solve_asn_least_squares,
    solve_maxssn,
    unbalanced_error_profile,
)
from .models import build_conv_model, build_linear_model, linear_g_parts
from .training import (
    TrainConfig,
    fine_tune,
    train,
    train_asn,
    train_clean,
    train_ssn,
    train_ssn_alt,
)

__version__ = "1.0.0"

__all__ = [
    "AdvSolution",
    "AdvSpec",
    "ConfigurationError",
    "ConvergenceError",
    "CorruptionSpec",
    "FusionRobustError",
    "FusionSolution",
    "LatentSpec",
    "LinearDataset",
    "MultiSourceDataset",
    "PreconditionError",
    "RobustnessReport",
    "ShapeError",
    "StateError",
    "SyntheticTask",
    "TrainConfig",
    "TrainingDivergedError",
    "adv_gap_condition",
    "adv_reduced_objective",
    "build_conv_model",
    "build_linear_model",
    "corrupt",
    "default_tau",
    "evaluate_metric",
    "evaluate_robustness",
    "expected_ssn_loss",
    "fgs_attack",
    "fine_tune",
    "generate_linear_data",
    "linear_g_parts",
    "make_task",
    "maxssn_gap_bound",
    "oracle_minimax",
    "oracle_minimax_l1",
    "predict_fdir",
    "solve_asn_least_squares",
    "solve_maxssn",
    "solve_maxssn_adv",
    "train",
    "train_asn",
    "train_clean",
    "train_ssn",
    "train_ssn_alt",
    "unbalanced_error_profile",
]
