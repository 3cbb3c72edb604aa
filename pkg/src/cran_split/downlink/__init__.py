"""Downlink precoding-placement models: costs, clustering, and solvers."""

from .costs import (
    AntennaLayout,
    ClusterAssignment,
    SelectionMatrices,
    cluster_assign,
    downlink_rate,
    embed_covariance,
    embed_indices,
    fronthaul_cost_alt,
    fronthaul_cost_conventional,
    fronthaul_upper_bound,
    logdet_linearize,
    omega_diag,
    rank_reduce,
    rate_lower_bound,
    rrh_power,
    selection_matrices,
)
from .solvers import (
    ALT_INSTANT,
    ALT_STOCHASTIC,
    CONVENTIONAL,
    CovarianceSolution,
    DownlinkProblem,
    RateEvaluation,
    SolverOptions,
    SolverTrace,
    evaluate_instantaneous,
    evaluate_stochastic,
    solve_instantaneous,
    solve_stochastic,
)

__all__ = [
    "AntennaLayout",
    "ClusterAssignment",
    "SelectionMatrices",
    "cluster_assign",
    "downlink_rate",
    "embed_covariance",
    "embed_indices",
    "fronthaul_cost_alt",
    "fronthaul_cost_conventional",
    "fronthaul_upper_bound",
    "logdet_linearize",
    "omega_diag",
    "rank_reduce",
    "rate_lower_bound",
    "rrh_power",
    "selection_matrices",
    "ALT_INSTANT",
    "ALT_STOCHASTIC",
    "CONVENTIONAL",
    "CovarianceSolution",
    "DownlinkProblem",
    "RateEvaluation",
    "SolverOptions",
    "SolverTrace",
    "evaluate_instantaneous",
    "evaluate_stochastic",
    "solve_instantaneous",
    "solve_stochastic",
]
