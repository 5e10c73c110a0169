"""Dense reference solver for cross-checking path results.

Deliberately independent of the matrix-free machinery: the Gram matrix is
materialized densely, the box QP is solved by SciPy's L-BFGS-B and then
polished to machine precision by a dense active-set refinement.  Intended
for small problems (the CLI guards n <= 500).
"""

from __future__ import annotations

import numpy as np
from scipy import optimize

from .dataset import Dataset
from .dualpath import CostSchedule, upper_bounds


def dense_q(ds: Dataset) -> np.ndarray:
    """Materialize Q[i,j] = y_i y_j <x_i, x_j> as a dense array."""
    X = ds.feature_matrix().toarray()
    y = np.asarray(ds.labels, float)
    return (X @ X.T) * np.outer(y, y)


def solve_box_qp_dense(Q: np.ndarray, lam: float, upper: np.ndarray,
                       max_polish: int = 60) -> np.ndarray:
    """Minimize (1/(2*lam)) a^T Q a - 1^T a over [0, upper], densely.

    L-BFGS-B provides the bulk solution; an active-set polish then solves
    the free block exactly (least squares, which also covers singular
    blocks) until the KKT sign pattern is consistent.
    """
    n = Q.shape[0]
    upper = np.asarray(upper, float)
    H = Q / lam

    def fun(a):
        Ha = H @ a
        return 0.5 * a @ Ha - a.sum(), Ha - 1.0

    res = optimize.minimize(
        fun, x0=np.zeros(n), jac=True, method="L-BFGS-B",
        bounds=[(0.0, u) for u in upper],
        options={"maxiter": 5000, "ftol": 1e-18, "gtol": 1e-14},
    )
    alpha = np.clip(res.x, 0.0, upper)

    scale = max(1.0, float(np.abs(np.diag(H)).max()))
    btol = 1e-9 * (1.0 + upper.max())
    best, best_res = alpha.copy(), _kkt_residual(H, alpha, upper, btol)
    for _ in range(max_polish):
        g = H @ alpha - 1.0
        at_low = alpha <= btol
        at_up = alpha >= upper - btol
        fixed_low = at_low & (g > 1e-11 * scale)
        fixed_up = at_up & (g < -1e-11 * scale)
        free = ~(fixed_low | fixed_up)
        trial = np.zeros(n)
        trial[fixed_up] = upper[fixed_up]
        fidx = np.flatnonzero(free)
        if len(fidx):
            rhs = np.ones(len(fidx)) - H[np.ix_(fidx, np.flatnonzero(fixed_up))] \
                @ upper[fixed_up]
            sol, *_ = np.linalg.lstsq(H[np.ix_(fidx, fidx)], rhs, rcond=None)
            trial[fidx] = np.clip(sol, 0.0, upper[fidx])
        r = _kkt_residual(H, trial, upper, btol)
        if r < best_res:
            best, best_res = trial.copy(), r
        if r <= 1e-12 * scale:
            break
        alpha = trial
    return best


def _kkt_residual(H, alpha, upper, btol):
    g = H @ alpha - 1.0
    fixed = upper == 0
    at_low = (alpha <= btol) & ~fixed
    at_up = (alpha >= upper - btol) & ~fixed
    interior = ~(fixed | at_low | at_up)
    r = 0.0
    if np.any(interior):
        r = max(r, float(np.abs(g[interior]).max()))
    if np.any(at_low):
        r = max(r, max(0.0, float(-g[at_low].min())))
    if np.any(at_up):
        r = max(r, max(0.0, float(g[at_up].max())))
    return r


def solve_at_tau(ds: Dataset, lam: float, tau: float,
                 Q: np.ndarray | None = None) -> np.ndarray:
    """Reference dual solution at one tau."""
    if Q is None:
        Q = dense_q(ds)
    sched = CostSchedule(n=ds.n, lam=lam)
    upper = upper_bounds(sched, ds.labels, tau)
    return solve_box_qp_dense(Q, lam, upper)


def primal_from_alpha(ds: Dataset, lam: float, alpha: np.ndarray) -> np.ndarray:
    X = ds.feature_matrix().toarray()
    y = np.asarray(ds.labels, float)
    return X.T @ (alpha * y) / lam


def dual_value(Q: np.ndarray, lam: float, alpha: np.ndarray) -> float:
    return 0.5 * float(alpha @ Q @ alpha) / lam - float(alpha.sum())
