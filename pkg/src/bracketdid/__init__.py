"""Partial identification of ATT with two control groups under monotone trends.

The identified set for ATT_t is a union of bounds over all assignments of the
two control groups to the periods 2..t; inference uses a reflected bootstrap
that stays valid when the set collapses to a point.
"""
__version__ = "0.1.0"

from .bootstrap import (
    BootstrapConfig,
    BootstrapDistribution,
    IntervalResult,
    ci_identified_set,
    ci_parameter,
    ci_percentile,
    ci_union,
    empirical_quantile,
    normal_cdf,
    resample,
    run_bootstrap,
)
from .data import GroupLabel, Observation, PanelDataset, load_long_csv, read_long_csv, validate
from .diagnostics import (
    SensitivityParams,
    breakeven,
    falsification_test,
    sensitivity_bounds,
    sensitivity_ci,
    trend_export,
)
from .estimators import (
    BoundingEstimates,
    bounding_sums,
    group_change_mean,
    identified_set_hat,
    tau_hat,
)
from .exceptions import BootstrapError, BracketError, DataFormatError, EstimationError
from .simulation import DGPConfig, generate, monte_carlo, true_identified_set

__all__ = [
    "BootstrapConfig",
    "BootstrapDistribution",
    "BootstrapError",
    "bounding_sums",
    "BoundingEstimates",
    "BracketError",
    "breakeven",
    "ci_identified_set",
    "ci_parameter",
    "ci_percentile",
    "ci_union",
    "DataFormatError",
    "DGPConfig",
    "empirical_quantile",
    "EstimationError",
    "falsification_test",
    "generate",
    "group_change_mean",
    "GroupLabel",
    "identified_set_hat",
    "IntervalResult",
    "load_long_csv",
    "monte_carlo",
    "normal_cdf",
    "Observation",
    "PanelDataset",
    "read_long_csv",
    "resample",
    "run_bootstrap",
    "sensitivity_bounds",
    "sensitivity_ci",
    "SensitivityParams",
    "tau_hat",
    "trend_export",
    "true_identified_set",
    "validate",
]
