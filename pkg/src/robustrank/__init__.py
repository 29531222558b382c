"""Robust rank aggregation from pairwise comparisons with outlier detection."""

__version__ = "0.1.0"

from .graph import (
    ComparisonDataset,
    ComparisonRecord,
    GradientOperator,
    ScoreVector,
    apply_X,
    apply_Xt,
    build_operator,
    complete_graph_dataset,
    least_squares_scores,
    solve_laplacian,
)
from .io import read_comparisons, write_comparisons, write_matrix, write_report
from .lasso import huber_lasso, lasso_select_k
from .solvers import SolverConfig, SolverOutcome, alts, certify_coordinatewise_minimum, iht, ilts, proj_k
from .theory import BudgetExceeded, ConditionReport, compute_theta, compute_thm4_constants, prop1_equivalence_oracle

__all__ = [
    "ALTSRanker",
    "HuberLassoRanker",
    "IHTRanker",
    "ILTSRanker",
    "LeastSquaresRanker",
    "ComparisonDataset",
    "ComparisonRecord",
    "GradientOperator",
    "ScoreVector",
    "apply_X",
    "apply_Xt",
    "build_operator",
    "complete_graph_dataset",
    "least_squares_scores",
    "solve_laplacian",
    "read_comparisons",
    "write_comparisons",
    "write_matrix",
    "write_report",
    "huber_lasso",
    "lasso_select_k",
    "SolverConfig",
    "SolverOutcome",
    "alts",
    "certify_coordinatewise_minimum",
    "iht",
    "ilts",
    "proj_k",
    "BudgetExceeded",
    "ConditionReport",
    "compute_theta",
    "compute_thm4_constants",
    "prop1_equivalence_oracle",
]

_ESTIMATORS = {"ALTSRanker", "HuberLassoRanker", "IHTRanker", "ILTSRanker", "LeastSquaresRanker"}


def __getattr__(name):
    # scikit-learn is slow to import; only load it when an estimator is asked for
    if name in _ESTIMATORS:
        from . import estimators
        return getattr(estimators, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
