"""Barrier-method solver for the worst-case fusion game.

The problem: choose a gain K to minimize the trace of the updated error
covariance while an adversary chooses the cross-covariance Q, constrained
to keep the joint covariance block matrix PSD, to maximize it.  The payoff
is convex in the gain and concave in Q, so the solution is a saddle point.

The LMI constraint on Q is handled with a log-det barrier: for a weight
t > 0 the solver finds the saddle of

    t * trace_payoff(X, Q) + log det(I - Syy^{-1/2} Q^T Sxx^{-1} Q Syy^{-1/2})

with X = K^T, using an infeasible-start Newton method (backtracking on the
joint gradient norm).  The outer loop multiplies t by `mu` until q/t drops
below the gap tolerance, warm-starting each stage from the previous point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .core import (
    STRICT_PD_FLOOR,
    ConvergenceError,
    CovarianceMatrix,
    DimensionError,
    FeasibilityError,
    LinearMeasurementModel,
    SingularMatrixError,
    symmetrize,
)


@dataclass(frozen=True)
class SolverConfig:
    """Tunables for the barrier outer loop and the Newton inner loop."""

    t_init: float = 1.0
    mu: float = 10.0
    gap_tol: float = 1e-8
    residual_tol: float = 1e-10
    alpha: float = 0.1
    beta: float = 0.5
    max_inner_iters: int = 100
    max_outer_iters: int = 20

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 1/2)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.mu <= 1.0:
            raise ValueError("mu must be > 1")
        if self.t_init <= 0 or self.gap_tol <= 0 or self.residual_tol <= 0:
            raise ValueError("t_init and tolerances must be positive")
        if self.max_inner_iters < 1 or self.max_outer_iters < 1:
            raise ValueError("iteration limits must be at least 1")


@dataclass(frozen=True, eq=False)
class GamePoint:
    """Joint solver variable: gain transpose X (m x n) and cross-cov Q (n x q)."""

    X: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "X", np.ascontiguousarray(self.X, dtype=float))
        object.__setattr__(self, "Q", np.ascontiguousarray(self.Q, dtype=float))
        if self.X.ndim != 2 or self.Q.ndim != 2:
            raise DimensionError("GamePoint components must be matrices")


@dataclass(frozen=True, eq=False)
class GameSolution:
    """Solver output: optimal gain, worst-case cross-covariance, covariance."""

    K_star: np.ndarray
    Q_star: np.ndarray
    cov_out: CovarianceMatrix
    payoff: float
    residual_norm: float
    iterations: int


def _cov_array(value, name: str) -> np.ndarray:
    """Coerce a CovarianceMatrix or array to a strictly-PD ndarray."""
    if isinstance(value, CovarianceMatrix):
        value.require_strictly_pd(name)
        return np.ascontiguousarray(value.data)
    arr = symmetrize(np.asarray(value, dtype=float))
    w = np.linalg.eigvalsh(arr)
    if w[0] < STRICT_PD_FLOOR:
        raise SingularMatrixError(
            f"{name} must be strictly positive definite (min eigenvalue {w[0]:.3e})"
        )
    return np.ascontiguousarray(arr)


class _Workspace:
    """Precomputed constant matrices shared by all solver operations."""

    def __init__(self, sigma_xx, sigma_yy, model: LinearMeasurementModel):
        sxx = _cov_array(sigma_xx, "sigma_xx")
        syy = _cov_array(sigma_yy, "sigma_yy")
        if model.state_dim != sxx.shape[0]:
            raise DimensionError(
                f"C has {model.state_dim} columns but sigma_xx is {sxx.shape[0]}-dimensional"
            )
        if model.aux_dim != syy.shape[0]:
            raise DimensionError(
                f"D has {model.aux_dim} columns but sigma_yy is {syy.shape[0]}-dimensional"
            )
        self.m = model.meas_dim
        self.n = model.state_dim
        self.q = model.aux_dim
        self.C = np.ascontiguousarray(model.C)
        self.D = np.ascontiguousarray(model.D)
        self.CT = np.ascontiguousarray(self.C.T)
        self.DT = np.ascontiguousarray(self.D.T)
        self.Sn = np.ascontiguousarray(model.noise_cov.data)
        self.sxx = sxx
        self.syy = syy
        self.sxx_inv = np.ascontiguousarray(np.linalg.inv(sxx))
        w, v = np.linalg.eigh(syy)
        self.syy_ish = np.ascontiguousarray(symmetrize((v / np.sqrt(w)) @ v.T))
        self.csxx = np.ascontiguousarray(self.C @ sxx)
        self.M0 = np.ascontiguousarray(
            symmetrize(self.C @ sxx @ self.CT + self.D @ syy @ self.DT + self.Sn)
        )

    def args(self):
        return (self.C, self.D, self.CT, self.DT, self.Sn, self.sxx, self.syy,
                self.sxx_inv, self.syy_ish, self.csxx, self.M0)

    def check_point(self, X, Q):
        X = np.ascontiguousarray(X, dtype=float)
        Q = np.ascontiguousarray(Q, dtype=float)
        if X.shape != (self.m, self.n):
            raise DimensionError(f"X must be {self.m}x{self.n}, got {X.shape}")
        if Q.shape != (self.n, self.q):
            raise DimensionError(f"Q must be {self.n}x{self.q}, got {Q.shape}")
        return X, Q


def payoff(X, Q, sigma_xx, sigma_yy, model: LinearMeasurementModel) -> float:
    """Trace of the updated covariance for gain transpose X and cross-cov Q."""
    w = _Workspace(sigma_xx, sigma_yy, model)
    X, Q = w.check_point(X, Q)
    return float(_k._payoff_k(w.C, w.D, w.Sn, w.sxx, w.syy, X, Q))


def barrier_payoff(X, Q, t: float, sigma_xx, sigma_yy,
                   model: LinearMeasurementModel) -> float:
    """t * payoff + log det(-f1(Q)); requires Q strictly feasible."""
    w = _Workspace(sigma_xx, sigma_yy, model)
    X, Q = w.check_point(X, Q)
    ok, logdet, _g1, _siq = _k._barrier_terms(w.sxx_inv, w.syy_ish, Q)
    if not ok:
        raise FeasibilityError("Q lies on or outside the feasible region")
    return float(t * _k._payoff_k(w.C, w.D, w.Sn, w.sxx, w.syy, X, Q) + logdet)


def residual(X, Q, t: float, sigma_xx, sigma_yy,
             model: LinearMeasurementModel) -> np.ndarray:
    """Flattened joint gradient of the barrier payoff, X block first."""
    w = _Workspace(sigma_xx, sigma_yy, model)
    X, Q = w.check_point(X, Q)
    ok, rx, rq, _g1, _M = _k._residual_k(*w.args(), X, Q, t)
    if not ok:
        raise FeasibilityError("Q lies on or outside the feasible region")
    return np.concatenate([rx.ravel(), rq.ravel()])


def newton_step(X, Q, t: float, sigma_xx, sigma_yy,
                model: LinearMeasurementModel) -> tuple:
    """Solve the linearized saddle system for the Newton direction (dX, dQ).

    The two coupled matrix equations are flattened into one dense linear
    system whose columns are images of basis matrices; problem sizes here
    are tiny, so a dense solve (plus one refinement pass) is appropriate.
    """
    w = _Workspace(sigma_xx, sigma_yy, model)
    X, Q = w.check_point(X, Q)
    ok, rx, rq, g1, M = _k._residual_k(*w.args(), X, Q, t)
    if not ok:
        raise FeasibilityError("Q lies on or outside the feasible region")
    J = _k._jacobian_k(w.C, w.D, w.CT, w.DT, w.sxx_inv, w.sxx_inv @ Q, g1, X, Q, M, t)
    rhs = -np.concatenate([rx.ravel(), rq.ravel()])
    try:
        d = np.linalg.solve(J, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            f"Newton system is singular (condition estimate {np.linalg.cond(J):.3e})"
        ) from exc
    # one pass of iterative refinement keeps the relative residual tiny even
    # when the barrier Hessian is steep near the boundary
    d += np.linalg.solve(J, rhs - J @ d)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm > 0 and np.linalg.norm(J @ d - rhs) > 1e-10 * rhs_norm:
        raise SingularMatrixError(
            f"Newton system is numerically singular "
            f"(condition estimate {np.linalg.cond(J):.3e})"
        )
    mn = w.m * w.n
    return d[:mn].reshape(w.m, w.n), d[mn:].reshape(w.n, w.q)


def initial_point(sigma_xx, sigma_yy, model: LinearMeasurementModel) -> GamePoint:
    """Strictly feasible start: Q = 0 and X solving M0 X = C Sxx."""
    w = _Workspace(sigma_xx, sigma_yy, model)
    return _initial_point(w)


def _initial_point(w: _Workspace) -> GamePoint:
    eigs = np.linalg.eigvalsh(w.M0)
    if eigs[0] < STRICT_PD_FLOOR:
        raise SingularMatrixError(
            f"C Sxx C^T + D Syy D^T + Sn is singular (min eigenvalue {eigs[0]:.3e}); "
            "add measurement noise to regularize the update"
        )
    x0 = np.linalg.solve(w.M0, w.csxx)
    return GamePoint(X=x0, Q=np.zeros((w.n, w.q)))


def _raise_for_status(status: int, rnorm: float, max_inner: int):
    if status == _k.STATUS_INFEASIBLE_START:
        raise FeasibilityError("starting Q is not strictly feasible")
    if status == _k.STATUS_SINGULAR_SYSTEM:
        raise SingularMatrixError("Newton system is singular at the current iterate")
    if status == _k.STATUS_LINE_SEARCH_STALL:
        raise ConvergenceError(
            f"line search stalled with residual norm {rnorm:.3e}", rnorm)
    if status == _k.STATUS_MAX_ITERS:
        raise ConvergenceError(
            f"inner Newton loop hit {max_inner} iterations "
            f"with residual norm {rnorm:.3e}", rnorm)


def solve_inner(start: GamePoint, t: float, sigma_xx, sigma_yy,
                model: LinearMeasurementModel,
                cfg: SolverConfig | None = None) -> GamePoint:
    """Run the inner Newton loop at fixed barrier weight t."""
    cfg = cfg or SolverConfig()
    w = _Workspace(sigma_xx, sigma_yy, model)
    X, Q = w.check_point(start.X, start.Q)
    X, Q, rnorm, _iters, status, _rh, _ph = _k._inner_solve_k(
        *w.args(), X, Q, t, _inner_tol(cfg, t), _stall_tol(t), cfg.alpha,
        cfg.beta, cfg.max_inner_iters, False)
    _raise_for_status(status, rnorm, cfg.max_inner_iters)
    return GamePoint(X=X, Q=Q)


def _inner_tol(cfg: SolverConfig, t: float) -> float:
    # the residual scales with the barrier weight, so an absolute tolerance
    # is unreachable in float64 once t is large; this keeps residual_tol
    # meaningful as a tolerance on the t-normalized gradient
    return cfg.residual_tol * max(1.0, t)


def _stall_tol(t: float) -> float:
    # numerical floor of the residual evaluation when the worst-case Q is
    # on the feasibility boundary; see _kernels._inner_solve_k
    return np.sqrt(np.finfo(float).eps) * max(1.0, t)


def solve_game(sigma_xx, sigma_yy, model: LinearMeasurementModel,
               cfg: SolverConfig | None = None,
               trace=None) -> GameSolution:
    """Solve the full minimax fusion game.

    Runs the barrier outer loop t <- mu * t from t_init, warm-starting each
    inner Newton solve from the previous point, until q/t (the log-det
    barrier duality-gap bound, q being the side of the LMI block) falls
    below cfg.gap_tol.

    `trace`, if given, is called once per accepted inner iterate with a
    dict {outer_t, iter, residual_norm, payoff}.
    """
    cfg = cfg or SolverConfig()
    w = _Workspace(sigma_xx, sigma_yy, model)
    point = _initial_point(w)
    X, Q = point.X, point.Q
    want_payoff = trace is not None

    t = cfg.t_init
    total_iters = 0
    rnorm = np.inf
    for _outer in range(cfg.max_outer_iters):
        X, Q, rnorm, iters, status, rhist, phist = _k._inner_solve_k(
            *w.args(), X, Q, t, _inner_tol(cfg, t), _stall_tol(t), cfg.alpha,
            cfg.beta, cfg.max_inner_iters, want_payoff)
        _raise_for_status(status, rnorm, cfg.max_inner_iters)
        total_iters += iters
        if trace is not None:
            for k in range(rhist.shape[0]):
                trace({"outer_t": t, "iter": int(k),
                       "residual_norm": float(rhist[k]),
                       "payoff": float(phist[k])})
        if w.q / t < cfg.gap_tol:
            break
        t *= cfg.mu
    else:
        raise ConvergenceError(
            f"barrier loop hit {cfg.max_outer_iters} outer iterations "
            f"before reaching gap tolerance", rnorm)

    cov_plus = _updated_cov(w, X, Q)
    return GameSolution(
        K_star=X.T.copy(),
        Q_star=Q,
        cov_out=CovarianceMatrix(cov_plus),
        payoff=float(np.trace(cov_plus)),
        residual_norm=float(rnorm),
        iterations=total_iters,
    )


def _updated_cov(w: _Workspace, X, Q) -> np.ndarray:
    """Full updated covariance at gain K = X^T and cross-covariance Q."""
    K = X.T
    A = np.eye(w.n) - K @ w.C
    B = K @ w.D
    cov = (A @ w.sxx @ A.T + B @ w.syy @ B.T
           - A @ Q @ B.T - B @ Q.T @ A.T + K @ w.Sn @ K.T)
    return symmetrize(cov)
