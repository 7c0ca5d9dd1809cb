"""Regularized MANOVA for high-dimensional semicontinuous data.

Two-part (zero-inflated log-normal) model with closed-form ridge-penalized
estimates, information-criterion penalty selection, a likelihood-ratio
statistic and a permutation null distribution.
"""

from __future__ import annotations

from .data import (
    FilterOutcome,
    LogData,
    PresencePattern,
    SemicontDataset,
    filter_variables,
    ingest,
    to_log_data,
)
from .estimation import (
    ModelParams,
    PenaltyVector,
    estimate_mu,
    estimate_pi,
    estimate_sigma,
    fit,
    fit_model,
)
from .exceptions import (
    InfeasibleGridError,
    InsufficientVariablesError,
    InternalInvariantError,
    NotPositiveDefiniteError,
    ScmanovaError,
    ValidationError,
)
from .inference import (
    PermutationConfig,
    TestReport,
    count_homogeneity_diagnostic,
    lrt_statistic,
    permutation_test,
    wilks_reference,
)
from .likelihood import (
    PatternCache,
    information_criterion,
    log_likelihood,
    penalized_log_likelihood,
)
from .selection import LambdaGrid, SelectionResult, default_grid, select_lambda
from .simulation import Scenario, ScenarioResult, generate_dataset, paper_grid, run_scenario

__version__ = "0.1.0"

__all__ = [
    "SemicontDataset", "LogData", "PresencePattern", "FilterOutcome",
    "ingest", "to_log_data", "filter_variables",
    "ModelParams", "PenaltyVector", "estimate_pi", "estimate_mu", "estimate_sigma", "fit", "fit_model",
    "PatternCache", "log_likelihood", "penalized_log_likelihood", "information_criterion",
    "LambdaGrid", "SelectionResult", "default_grid", "select_lambda",
    "PermutationConfig", "TestReport", "lrt_statistic", "permutation_test", "wilks_reference",
    "count_homogeneity_diagnostic",
    "Scenario", "ScenarioResult", "generate_dataset", "run_scenario", "paper_grid",
    "ScmanovaError", "ValidationError", "InsufficientVariablesError", "NotPositiveDefiniteError",
    "InfeasibleGridError", "InternalInvariantError",
]
