"""Compiled numeric kernels for the saddle-point solver.

These functions are the single implementation of the game payoff, its
gradients, the Newton system, and the inner Newton loop.  They operate on
plain C-contiguous float64 arrays and are JIT-compiled with numba (with an
on-disk cache) because the multi-agent simulator calls the solver tens of
thousands of times.  If numba is unavailable the same code runs as plain
Python, just slower.

Conventions: the gain enters transposed as X (m x n, so the gain K = X^T),
Q is the candidate cross-covariance (n x q), and flattening is row-major
with the X block first.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


# status codes returned by _inner_solve_k
STATUS_OK = 0
STATUS_MAX_ITERS = 1
STATUS_LINE_SEARCH_STALL = 2
STATUS_SINGULAR_SYSTEM = 3
STATUS_INFEASIBLE_START = 4


@njit(cache=True)
def _chol_logdet(mat):
    """Lower Cholesky pivot sweep; returns (ok, log det).

    ok is False when the matrix is not strictly positive definite, which is
    how the solver detects that a trial Q left the open barrier domain.
    """
    size = mat.shape[0]
    lower = np.zeros((size, size))
    logdet = 0.0
    for i in range(size):
        for j in range(i + 1):
            acc = mat[i, j]
            for k in range(j):
                acc -= lower[i, k] * lower[j, k]
            if i == j:
                if not np.isfinite(acc) or acc <= 1e-300:
                    return False, 0.0
                lower[i, i] = np.sqrt(acc)
                logdet += 2.0 * np.log(lower[i, i])
            else:
                lower[i, j] = acc / lower[j, j]
    return True, logdet


@njit(cache=True)
def _barrier_terms(sxx_inv, syy_ish, Q):
    """Feasibility, log det(-f1) and g1 = Syy^{-1/2} f1^{-1} Syy^{-1/2}.

    f1(Q) = Syy^{-1/2} Q^T Sxx^{-1} Q Syy^{-1/2} - I must be negative
    definite for Q strictly inside the feasible region.
    """
    qd = Q.shape[1]
    qt = Q.T.copy()
    siq = sxx_inv @ Q
    neg_f1 = np.eye(qd) - syy_ish @ (qt @ siq) @ syy_ish
    ok, logdet = _chol_logdet(neg_f1)
    if not ok:
        return False, 0.0, np.zeros((qd, qd)), siq
    g1 = -(syy_ish @ np.linalg.inv(neg_f1) @ syy_ish)
    return True, logdet, g1, siq


@njit(cache=True)
def _payoff_k(C, D, Sn, sxx, syy, X, Q):
    """trace of the updated covariance at gain K = X^T and cross-cov Q."""
    n = C.shape[1]
    xt = X.T.copy()
    A = np.eye(n) - xt @ C
    B = xt @ D  # the update uses -K D, so the cross terms get minus signs
    at = A.T.copy()
    bt = B.T.copy()
    cov = A @ sxx @ at + B @ syy @ bt - A @ Q @ bt - B @ (Q.T.copy() @ at) + xt @ Sn @ X
    tr = 0.0
    for i in range(n):
        tr += cov[i, i]
    return tr


@njit(cache=True)
def _residual_k(C, D, CT, DT, Sn, sxx, syy, sxx_inv, syy_ish, csxx, M0, X, Q, t):
    """Joint gradient of the barrier-weighted payoff.

    Returns (ok, RX, RQ, g1, M) where RX = t * grad_X f and
    RQ = t * grad_Q f + grad_Q log det(-f1).  g1 and M are returned for
    reuse by the Newton system at the same point.
    """
    m, n = X.shape
    qd = Q.shape[1]
    ok, _logdet, g1, siq = _barrier_terms(sxx_inv, syy_ish, Q)
    if not ok:
        return False, np.zeros((m, n)), np.zeros((n, qd)), g1, np.zeros((m, m))
    qt = Q.T.copy()
    cqdt = C @ Q @ DT
    M = M0 + cqdt + cqdt.T
    rx = (2.0 * t) * (M @ X - (csxx + D @ qt))
    xtd = X.T.copy() @ D
    ctx = CT @ X
    rq = (2.0 * t) * ((ctx - np.eye(n)) @ xtd) + 2.0 * (siq @ g1)
    return True, rx, rq, g1, M


@njit(cache=True)
def _jacobian_k(C, D, CT, DT, sxx_inv, siq, g1, X, Q, M, t):
    """Dense Jacobian of the residual, assembled column by column.

    Each column is the image of one basis matrix under the differential of
    the joint gradient; unknowns are ordered [vec(dX); vec(dQ)] row-major.
    """
    m, n = X.shape
    qd = Q.shape[1]
    mn = m * n
    nq = n * qd
    xt = X.T.copy()
    xtd = xt @ D
    dtx = DT @ X
    im_ctx = np.eye(n) - CT @ X
    siq_g1 = siq @ g1
    siq_t = siq.T.copy()
    two_t = 2.0 * t

    J = np.empty((mn + nq, mn + nq))
    E = np.zeros((m, n))
    Et = np.zeros((n, m))
    for i in range(m):
        for j in range(n):
            E[i, j] = 1.0
            Et[j, i] = 1.0
            img_x = two_t * (M @ E)
            img_q = two_t * (CT @ (E @ xtd) - im_ctx @ (Et @ D))
            col = i * n + j
            J[:mn, col] = img_x.ravel()
            J[mn:, col] = img_q.ravel()
            E[i, j] = 0.0
            Et[j, i] = 0.0

    F = np.zeros((n, qd))
    Ft = np.zeros((qd, n))
    for i in range(n):
        for j in range(qd):
            F[i, j] = 1.0
            Ft[j, i] = 1.0
            img_x = two_t * (C @ (F @ dtx) - D @ (Ft @ im_ctx))
            img_q = 2.0 * (sxx_inv @ (F @ g1)) \
                - 2.0 * (siq_g1 @ ((Ft @ siq + siq_t @ F) @ g1))
            col = mn + i * qd + j
            J[:mn, col] = img_x.ravel()
            J[mn:, col] = img_q.ravel()
            F[i, j] = 0.0
            Ft[j, i] = 0.0
    return J


@njit(cache=True)
def _res_norm(rx, rq):
    return np.sqrt(np.sum(rx * rx) + np.sum(rq * rq))


@njit(cache=True)
def _inner_solve_k(C, D, CT, DT, Sn, sxx, syy, sxx_inv, syy_ish, csxx, M0,
                   X0, Q0, t, eps, stall_tol, alpha, beta, max_iters,
                   want_payoff):
    """Infeasible-start Newton iteration on the joint gradient residual.

    Backtracks on the residual norm and additionally rejects any trial
    point whose Q leaves the strict feasibility region (the barrier domain
    is open).  When the worst-case Q sits on the feasibility boundary the
    residual hits a float64 noise floor at large barrier weights; progress
    stagnation with the norm already below `stall_tol` is therefore
    reported as convergence rather than ground out against noise.

    Returns (X, Q, residual_norm, iters, status, rnorm_history,
    payoff_history); histories have one entry per accepted iterate
    including the starting point.
    """
    m, n = X0.shape
    qd = Q0.shape[1]
    mn = m * n
    nq = n * qd
    X = X0.copy()
    Q = Q0.copy()

    rhist = np.zeros(max_iters + 1)
    phist = np.zeros(max_iters + 1)
    ok, rx, rq, g1, M = _residual_k(C, D, CT, DT, Sn, sxx, syy, sxx_inv,
                                    syy_ish, csxx, M0, X, Q, t)
    if not ok:
        return X, Q, -1.0, 0, STATUS_INFEASIBLE_START, rhist[:1], phist[:1]
    rnorm = _res_norm(rx, rq)
    rhist[0] = rnorm
    if want_payoff:
        phist[0] = _payoff_k(C, D, Sn, sxx, syy, X, Q)

    iters = 0
    status = STATUS_OK
    while rnorm > eps and iters < max_iters:
        J = _jacobian_k(C, D, CT, DT, sxx_inv, sxx_inv @ Q, g1, X, Q, M, t)
        rhs = np.empty(mn + nq)
        rhs[:mn] = -rx.ravel()
        rhs[mn:] = -rq.ravel()
        solved = True
        d = np.zeros(mn + nq)
        try:
            d = np.linalg.solve(J, rhs)
        except Exception:
            solved = False
        if not solved or not np.all(np.isfinite(d)):
            status = STATUS_SINGULAR_SYSTEM
            break
        dX = d[:mn].reshape(m, n)
        dQ = d[mn:].reshape(n, qd)

        step = 1.0
        accepted = False
        while step >= 1e-16:
            Xs = X + step * dX
            Qs = Q + step * dQ
            ok, rx_s, rq_s, g1_s, M_s = _residual_k(
                C, D, CT, DT, Sn, sxx, syy, sxx_inv, syy_ish, csxx, M0, Xs, Qs, t)
            if ok:
                rn_s = _res_norm(rx_s, rq_s)
                if rn_s <= (1.0 - alpha * step) * rnorm:
                    X = Xs
                    Q = Qs
                    rx = rx_s
                    rq = rq_s
                    g1 = g1_s
                    M = M_s
                    rnorm = rn_s
                    accepted = True
                    break
            step *= beta
        if not accepted:
            if rnorm <= stall_tol:
                break  # converged to the numerical floor
            status = STATUS_LINE_SEARCH_STALL
            break
        iters += 1
        rhist[iters] = rnorm
        if want_payoff:
            phist[iters] = _payoff_k(C, D, Sn, sxx, syy, X, Q)
        # Newton well inside its basin contracts the norm far faster than
        # 2x per 5 steps; slower progress with a tiny norm means the floor
        if iters >= 5 and rnorm > 0.5 * rhist[iters - 5] and rnorm <= stall_tol:
            break

    if status == STATUS_OK and rnorm > eps and rnorm > stall_tol:
        status = STATUS_MAX_ITERS
    return X, Q, rnorm, iters, status, rhist[:iters + 1], phist[:iters + 1]
