"""Numerical workhorses: a box-constrained QP solver and a CG linear solver.

Both operate matrix-free through :class:`~quantpath.qoperator.QOperator`.
The box solver minimizes D(a) = (1/(2*lam)) a^T Q a - 1^T a over
0 <= a_i <= upper_i; the CG solver handles the margin-set systems
Q[M,M] x = rhs, retrying with a tiny ridge when the block is rank
deficient and plain CG stalls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qoperator import QOperator

_TINY = np.finfo(float).tiny


@dataclass
class BoxQPResult:
    alpha: np.ndarray
    objective: float
    grad_residual: float
    iterations: int


@dataclass
class LinSolveResult:
    x: np.ndarray
    relative_residual: float
    converged: bool
    regularized: bool
    iterations: int = 0


class BoxQPError(RuntimeError):
    """Iteration budget exhausted; carries the best iterate seen."""

    def __init__(self, message, alpha, residual):
        super().__init__(message)
        self.alpha = alpha
        self.residual = residual


class LinSolveError(RuntimeError):
    """CG failed even after the ridge fallback."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def projected_residual(alpha, grad, upper):
    """Max violation of the box optimality pattern.

    Interior coordinates must have |grad| small, coordinates at 0 must
    have grad >= 0, coordinates at the upper bound grad <= 0.  A bound of
    exactly 0 fixes the variable and contributes nothing.
    """
    fixed = upper == 0
    at_low = (alpha <= 0) & ~fixed
    at_up = (alpha >= upper) & ~fixed
    interior = ~(fixed | at_low | at_up)
    r = 0.0
    if np.any(interior):
        r = max(r, np.abs(grad[interior]).max())
    if np.any(at_low):
        r = max(r, max(0.0, -grad[at_low].min()))
    if np.any(at_up):
        r = max(r, max(0.0, grad[at_up].max()))
    return r


def solve_box_qp(
    q: QOperator,
    lam: float,
    upper: np.ndarray,
    tol: float,
    max_iter: int = 100_000,
    warm_start: np.ndarray | None = None,
    callback=None,
) -> BoxQPResult:
    """Minimize (1/(2*lam)) a^T Q a - 1^T a over the box [0, upper].

    Projected gradient with spectral (Barzilai-Borwein) trial steps.  A
    trial step is accepted only if it does not increase the objective;
    otherwise an exact line search along the projected direction is taken
    instead, so the objective is non-increasing across iterations.  One
    Q-product per iteration.

    Raises :class:`BoxQPError` when ``max_iter`` is hit before the
    projected-gradient residual drops below ``tol``.
    """
    upper = np.asarray(upper, dtype=float)
    if np.any(upper < 0):
        raise ValueError("upper bounds must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = q.n
    if upper.shape != (n,):
        raise ValueError(f"expected {n} upper bounds, got {upper.shape}")

    x = np.zeros(n) if warm_start is None else np.clip(np.asarray(warm_start, float), 0.0, upper)
    Hx = q.apply(x) / lam
    g = Hx - 1.0
    f = 0.5 * float(x @ Hx) - float(x.sum())

    # Spectral step seed: exact Cauchy step length along -g.
    Hg = q.apply(g) / lam
    gHg = float(g @ Hg)
    step = float(g @ g) / gHg if gHg > 0 else 1.0

    best_x, best_r = x, np.inf
    for it in range(1, max_iter + 1):
        r = projected_residual(x, g, upper)
        if r < best_r:
            best_x, best_r = x.copy(), r
        if callback is not None:
            callback(it - 1, x, f)
        if r <= tol:
            return BoxQPResult(alpha=x, objective=f, grad_residual=r, iterations=it - 1)

        xt = np.clip(x - step * g, 0.0, upper)
        d = xt - x
        if not np.any(d):
            step *= 10.0  # projection swallowed the step entirely; enlarge
            continue
        Hxt = q.apply(xt) / lam
        ft = 0.5 * float(xt @ Hxt) - float(xt.sum())
        if ft <= f:
            x_new, Hx_new, f_new = xt, Hxt, ft
        else:
            # Quadratic exact line search on the segment [x, xt] (stays in box).
            Hd = Hxt - Hx
            gd = float(g @ d)
            dHd = float(d @ Hd)
            t = 1.0 if dHd <= 0 else min(1.0, max(0.0, -gd / dHd))
            x_new = x + t * d
            Hx_new = Hx + t * Hd
            f_new = f + t * gd + 0.5 * t * t * dHd
        g_new = Hx_new - 1.0

        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        ss = float(s @ s)
        if sy > 1e-300:
            step = ss / sy
        x, Hx, g, f = x_new, Hx_new, g_new, f_new

        if it % 100 == 0:  # refresh against incremental rounding drift
            Hx = q.apply(x) / lam
            g = Hx - 1.0
            f = 0.5 * float(x @ Hx) - float(x.sum())

    r = projected_residual(x, g, upper)
    if r < best_r:
        best_x, best_r = x, r
    raise BoxQPError(
        f"box QP did not reach tol={tol:g} in {max_iter} iterations "
        f"(residual {best_r:g})",
        alpha=best_x,
        residual=best_r,
    )


def _cg(matvec, b, tol_abs, max_iter):
    """Plain CG from 0. Returns (x, residual_norm, iterations, stalled)."""
    x = np.zeros_like(b)
    r = b.copy()
    rs = float(r @ r)
    tol_sq = tol_abs * tol_abs
    if rs <= tol_sq:
        return x, math.sqrt(rs), 0, False
    p = r.copy()
    best_x, best_rs = x.copy(), rs
    for it in range(1, max_iter + 1):
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if pAp <= 1e-14 * float(p @ p):
            return best_x, math.sqrt(best_rs), it, True  # null direction: stall
        a = rs / pAp
        x = x + a * p
        r = r - a * Ap
        rs_new = float(r @ r)
        if rs_new < best_rs:
            best_x, best_rs = x.copy(), rs_new
        if rs_new <= tol_sq:
            return x, math.sqrt(rs_new), it, False
        p = r + (rs_new / rs) * p
        rs = rs_new
    return best_x, math.sqrt(best_rs), max_iter, False


def cg_solve(
    q: QOperator,
    M,
    rhs: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> LinSolveResult:
    """Solve Q[M, M] x = rhs by conjugate gradients.

    If plain CG stalls or fails to converge (rank-deficient block), retries
    on Q[M,M] + delta*I with delta = 1e-12 * mean(diag) * max(1, |M|) and
    reports ``regularized=True``.  The returned relative residual is always
    measured against the original, un-ridged system.
    """
    M = np.asarray(M, dtype=int)
    m = len(M)
    if m == 0:
        return LinSolveResult(np.zeros(0), 0.0, True, False, 0)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (m,):
        raise ValueError(f"expected rhs of length {m}, got {rhs.shape}")
    if max_iter is None:
        max_iter = 10 * m

    SM = q.rows_block(M)

    def matvec(v):
        return np.asarray(SM @ (SM.T @ v)).ravel()

    bnorm = max(float(np.linalg.norm(rhs)), _TINY)
    x, rn, iters, stalled = _cg(matvec, rhs, tol * bnorm, max_iter)
    regularized = False
    if rn > tol * bnorm:
        delta = 1e-12 * (float(q.diag()[M].sum()) / m) * max(1, m)

        def matvec_ridge(v):
            return matvec(v) + delta * v

        x, rn_r, iters2, _ = _cg(matvec_ridge, rhs, tol * bnorm, max_iter)
        iters += iters2
        regularized = True
        if rn_r > tol * bnorm:
            rel = float(np.linalg.norm(matvec(x) - rhs)) / bnorm
            raise LinSolveError(
                f"CG failed even with ridge {delta:g} (relative residual {rel:g})",
                residual=rel,
            )
    rel = float(np.linalg.norm(matvec(x) - rhs)) / bnorm
    return LinSolveResult(x=x, relative_residual=rel, converged=True,
                          regularized=regularized, iterations=iters)
