"""Minimax-robust fusion of estimates with unknown cross-correlations."""

from .core import (
    ConvergenceError,
    CovarianceMatrix,
    CrossCovariance,
    DimensionError,
    Estimate,
    FeasibilityError,
    LinearMeasurementModel,
    SingularMatrixError,
    cross_feasible,
    inv_sqrt,
    is_psd,
    simple_fusion_model,
    symmetrize,
)
from .solver import (
    GamePoint,
    GameSolution,
    SolverConfig,
    barrier_payoff,
    initial_point,
    newton_step,
    payoff,
    residual,
    solve_game,
    solve_inner,
)

__all__ = [
    "ConvergenceError",
    "CovarianceMatrix",
    "CrossCovariance",
    "DimensionError",
    "Estimate",
    "FeasibilityError",
    "LinearMeasurementModel",
    "SingularMatrixError",
    "cross_feasible",
    "inv_sqrt",
    "is_psd",
    "simple_fusion_model",
    "symmetrize",
    "GamePoint",
    "GameSolution",
    "SolverConfig",
    "barrier_payoff",
    "initial_point",
    "newton_step",
    "payoff",
    "residual",
    "solve_game",
    "solve_inner",
]

__version__ = "0.1.0"
