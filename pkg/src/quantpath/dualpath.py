"""Dual solution path of the cost-sensitive SVM over the quantile parameter.

The dual problem at quantile tau is

    min D(a) = (1/(2*lam)) a^T Q a - 1^T a,   0 <= a_i <= c_{y_i}(tau),

with per-class cost bounds c_{+1}(tau) = 2(1-tau)/n and c_{-1}(tau) =
2*tau/n.  The optimal a is piecewise linear in tau.  Instances partition
into three sets by the dual gradient g = Q a / lam - 1:

    left   g_i < 0   (margin errors,      a_i = c_{y_i})
    margin g_i = 0   (on the margin,      a_i in [0, c_{y_i}])
    right  g_i > 0   (well classified,    a_i = 0)

Within a segment where the partition is fixed, a step of eps in tau shifts
every cost bound by dcost = 2*eps/n and the margin duals by dcost times a
slope vector obtained from the margin linear system.  A segment ends at the
smallest eps at which an index changes sets; three event types exist
(something enters the margin, a margin index hits its upper bound, a margin
index hits zero).  The tracer starts from a box-QP solve at tau = 0 and
walks event to event until tau = 1, recording one kink per breakpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, fingerprint
from .qoperator import QOperator
from .solver import LinSolveError, cg_solve, projected_residual, solve_box_qp

EVENT_START = "start"
EVENT_TO_MARGIN = "to_margin"
EVENT_TO_LEFT = "to_left"
EVENT_TO_RIGHT = "to_right"

_EVENT_PRIORITY = {EVENT_TO_MARGIN: 0, EVENT_TO_LEFT: 1, EVENT_TO_RIGHT: 2}

# Absolute tolerance for "alpha sits exactly on a box face" tests.
_BOUNDARY_ATOL = 1e-10


class PathError(RuntimeError):
    """Path tracing failed; ``partial`` holds the path traced so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class BudgetExhaustedError(PathError):
    pass


class DegenerateCyclingError(PathError):
    pass


@dataclass(frozen=True)
class CostSchedule:
    """Per-class cost bounds as a function of the quantile parameter."""

    n: int
    lam: float


def costs_at(sched: CostSchedule, tau: float) -> tuple[float, float]:
    """(c_plus, c_minus) = (2(1-tau)/n, 2*tau/n); tau must lie in [0, 1]."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau={tau} outside [0, 1]")
    return 2.0 * (1.0 - tau) / sched.n, 2.0 * tau / sched.n


def delta_cost(sched: CostSchedule, eps: float) -> float:
    """Change 2*eps/n of the cost bounds caused by a tau-step of eps."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return 2.0 * eps / sched.n


def upper_bounds(sched: CostSchedule, labels: np.ndarray, tau: float) -> np.ndarray:
    c_plus, c_minus = costs_at(sched, tau)
    return np.where(np.asarray(labels) > 0, c_plus, c_minus)


def gradient(q: QOperator, lam: float, alpha: np.ndarray) -> np.ndarray:
    """Dual gradient Q alpha / lam - 1."""
    return q.apply(alpha) / lam - 1.0


def classify_indices(grad: np.ndarray, tol_active: float):
    """Partition indices by gradient sign: (left, margin, right).

    |g_i| <= tol_active lands in the margin set.  At a zero-cost endpoint
    (tau in {0, 1}) an index with negative gradient belongs to left even
    though its dual value is pinned at c = 0.
    """
    left = grad < -tol_active
    right = grad > tol_active
    margin = ~(left | right)
    return np.flatnonzero(left), np.flatnonzero(margin), np.flatnonzero(right)


@dataclass
class DualState:
    """Snapshot of the tracer between events.

    ``left``/``margin``/``right`` are disjoint boolean masks covering all
    instances; ``margin_idx`` is the sorted margin index list that aligns
    with ``dalpha`` (the d alpha_margin / d cost segment slope).  ``grad``
    is held at exactly 0 on the margin.
    """

    tau: float
    alpha: np.ndarray
    grad: np.ndarray
    left: np.ndarray
    margin: np.ndarray
    right: np.ndarray
    margin_idx: np.ndarray
    dalpha: np.ndarray
    tol_active: float

    def left_split(self, labels):
        pos = np.asarray(labels) > 0
        return self.left & pos, self.left & ~pos


@dataclass
class Kink:
    """One breakpoint: data of the segment that starts at ``tau``.

    ``moves`` lists membership changes relative to the previous kink as
    (index, src, dst) with set codes L/M/R; coincident events collapse
    into one kink with several moves.
    """

    tau: float
    event: str
    moves: list[tuple[int, str, str]]
    alpha_margin: np.ndarray
    dalpha_margin: np.ndarray


@dataclass
class KinkPath:
    """Complete piecewise-linear description of the dual path on [0, 1]."""

    lam: float
    n: int
    d: int
    bias_augmented: bool
    fingerprint: str
    initial_left: np.ndarray
    initial_margin: np.ndarray
    kinks: list[Kink]
    terminal_tau: float
    complete: bool
    events_total: int = 0
    labels: np.ndarray | None = None

    @property
    def initial_alpha_margin(self) -> np.ndarray:
        return self.kinks[0].alpha_margin

    def taus(self) -> np.ndarray:
        return np.array([k.tau for k in self.kinks])


@dataclass
class TraceOptions:
    box_tol: float | None = None  # default: 1e-8 * n * max costs at tau=0
    box_max_iter: int = 200_000
    cg_tol: float = 1e-10
    drift_interval: int = 50
    event_budget: int | None = None  # default: 20 n max(ln n, 1) + 100


class LeftSums:
    """Feature-space sums over the left split, maintained incrementally.

    ``u_plus``/``u_minus`` hold sum of signed rows over the positive and
    negative left members; single-index moves update them in O(d), with a
    full refresh at drift-control intervals to cap rounding buildup.
    """

    def __init__(self, q: QOperator, labels: np.ndarray, left_mask: np.ndarray):
        self.q = q
        self.labels = labels
        self.refresh(left_mask)

    def refresh(self, left_mask: np.ndarray):
        pos = self.labels > 0
        self.u_plus = self.q.col_accumulate(np.flatnonzero(left_mask & pos))
        self.u_minus = self.q.col_accumulate(np.flatnonzero(left_mask & ~pos))

    def move(self, idx: int, src: str, dst: str):
        if src == dst or ("L" != src and "L" != dst):
            return
        row = self.q.row_dense(idx)
        target = self.u_plus if self.labels[idx] > 0 else self.u_minus
        if src == "L":
            target -= row
        else:
            target += row


def segment_slope(q: QOperator, margin_idx, left_plus_idx=None,
                  left_minus_idx=None, tol: float = 1e-10,
                  left_diff: np.ndarray | None = None) -> np.ndarray:
    """Margin slope: solve Q[M,M] x = Q[M,Lp] 1 - Q[M,Lm] 1 by CG.

    ``left_diff`` may carry the precomputed feature-space difference
    sum_{Lp} y_j x_j - sum_{Lm} y_j x_j in place of the index sets.
    """
    margin_idx = np.asarray(margin_idx, dtype=int)
    if len(margin_idx) == 0:
        return np.zeros(0)
    if left_diff is None:
        left_diff = q.col_accumulate(left_plus_idx) - q.col_accumulate(left_minus_idx)
    rhs = np.asarray(q.rows_block(margin_idx) @ left_diff).ravel()
    return cg_solve(q, margin_idx, rhs, tol=tol).x


def _den_vector(q: QOperator, state: DualState, labels: np.ndarray,
                sums: LeftSums | None = None) -> np.ndarray:
    """Per-index rate Q[i,Lm]1 - Q[i,Lp]1 + Q[i,M] dalpha for the segment.

    Used both to locate margin-entry events and to advance the gradient:
    d g_i / d eps = (2/(n*lam)) * den_i on the non-margin set.
    """
    if sums is not None:
        h = sums.u_minus - sums.u_plus
    else:
        lp, lm = state.left_split(labels)
        h = q.col_accumulate(np.flatnonzero(lm)) - q.col_accumulate(np.flatnonzero(lp))
    if len(state.margin_idx):
        h = h + q.col_accumulate(state.margin_idx, weights=state.dalpha)
    return q.row_products(h)


def eps_to_margin(state: DualState, q: QOperator, sched: CostSchedule,
                  den: np.ndarray | None = None,
                  blocked: np.ndarray | None = None):
    """Smallest eps > 0 at which a non-margin gradient crosses zero.

    Returns (eps, index); (inf, None) when no candidate exists.  A zero
    denominator means the gradient does not move and yields +inf.
    ``blocked`` masks out indices barred from re-entry by the tracer's
    anti-cycling rule.
    """
    if den is None:
        den = _den_vector(q, state, q.labels)
    outside = ~state.margin
    if blocked is not None:
        outside &= ~blocked
    idx = np.flatnonzero(outside)
    if len(idx) == 0:
        return math.inf, None
    den_sel = den[idx]
    num = (-0.5 * sched.n * sched.lam) * state.grad[idx]
    eps = np.full(len(idx), math.inf)
    np.divide(num, den_sel, out=eps, where=den_sel != 0.0)
    eps[~(eps > 0.0)] = math.inf
    j = int(np.argmin(eps))
    if not np.isfinite(eps[j]):
        return math.inf, None
    return float(eps[j]), int(idx[j])


def eps_to_left(state: DualState, sched: CostSchedule, labels: np.ndarray):
    """Smallest eps >= 0 at which a margin dual hits its upper bound.

    An index already sitting on the bound leaves immediately (eps = 0)
    unless its slope keeps it inside the shrinking/growing box.
    """
    midx = state.margin_idx
    if len(midx) == 0:
        return math.inf, None
    c_plus, c_minus = costs_at(sched, state.tau)
    y = labels[midx]
    upper = np.where(y > 0, c_plus, c_minus)
    a = state.alpha[midx]
    da = state.dalpha
    at_bound = a >= upper - _BOUNDARY_ATOL
    denom = da + y
    eps = np.full(len(midx), math.inf)
    np.divide((0.5 * sched.n) * (upper - a), denom, out=eps, where=denom != 0.0)
    eps[~(eps >= 0.0)] = math.inf
    eps[at_bound] = np.where(da[at_bound] > -y[at_bound], 0.0, math.inf)
    j = int(np.argmin(eps))
    if not np.isfinite(eps[j]):
        return math.inf, None
    return float(eps[j]), int(midx[j])


def eps_to_right(state: DualState, sched: CostSchedule):
    """Smallest eps >= 0 at which a margin dual hits zero."""
    midx = state.margin_idx
    if len(midx) == 0:
        return math.inf, None
    a = state.alpha[midx]
    da = state.dalpha
    at_zero = a <= _BOUNDARY_ATOL
    eps = np.full(len(midx), math.inf)
    np.divide((-0.5 * sched.n) * a, da, out=eps, where=da != 0.0)
    eps[~(eps >= 0.0)] = math.inf
    eps[at_zero] = np.where(da[at_zero] < 0.0, 0.0, math.inf)
    j = int(np.argmin(eps))
    if not np.isfinite(eps[j]):
        return math.inf, None
    return float(eps[j]), int(midx[j])


def advance(state: DualState, q: QOperator, sched: CostSchedule, eps: float,
            event: str | None = None, idx: int | None = None,
            den: np.ndarray | None = None, cg_tol: float = 1e-10,
            copy: bool = True) -> DualState:
    """Step tau by eps along the current segment and apply one event.

    Left duals track their cost bounds exactly, margin duals move by
    dcost * dalpha (clipped into the new box), right duals stay zero; the
    non-margin gradient advances at rate den/(lam) per unit cost.  With
    ``event`` set, exactly the index ``idx`` changes sets.  The new
    state's ``dalpha`` is stale and must be recomputed by the caller.

    A leaving index is snapped exactly onto its box face.  The snap can
    move alpha by up to the boundary tolerance, which at small lam shifts
    the true gradient noticeably, so the displacement is propagated: the
    remaining margin block is re-solved for the compensating correction
    and the gradient updated exactly, keeping the tracked state on the
    optimality manifold.

    With ``copy=False`` the input state's arrays are reused (the tracer's
    hot loop discards the old state anyway).
    """
    if not 0.0 <= eps <= 1.0 - state.tau + 1e-15:
        raise ValueError(f"eps={eps} outside [0, {1.0 - state.tau}]")
    labels = q.labels
    if den is None:
        den = _den_vector(q, state, labels)
    tau2 = min(state.tau + eps, 1.0)
    dc = delta_cost(sched, eps)
    c_plus, c_minus = costs_at(sched, tau2)

    alpha = state.alpha.copy() if copy else state.alpha
    lp, lm = state.left_split(labels)
    alpha[lp] = c_plus
    alpha[lm] = c_minus
    midx = state.margin_idx
    if len(midx):
        upper_m = np.where(labels[midx] > 0, c_plus, c_minus)
        alpha[midx] = np.clip(alpha[midx] + dc * state.dalpha, 0.0, upper_m)

    grad = state.grad.copy() if copy else state.grad
    outside = ~state.margin
    grad[outside] += (dc / sched.lam) * den[outside]
    grad[midx] = 0.0

    left = state.left.copy() if copy else state.left
    margin = state.margin.copy() if copy else state.margin
    right = state.right.copy() if copy else state.right
    snap_delta = 0.0
    if event is not None:
        if event == EVENT_TO_MARGIN:
            src_left = left[idx]
            left[idx] = right[idx] = False
            margin[idx] = True
            alpha[idx] = (c_plus if labels[idx] > 0 else c_minus) if src_left else 0.0
            grad[idx] = 0.0
        elif event == EVENT_TO_LEFT:
            margin[idx] = False
            left[idx] = True
            target = c_plus if labels[idx] > 0 else c_minus
            snap_delta = target - alpha[idx]
            alpha[idx] = target
            grad[idx] = 0.0
        elif event == EVENT_TO_RIGHT:
            margin[idx] = False
            right[idx] = True
            snap_delta = -alpha[idx]
            alpha[idx] = 0.0
            grad[idx] = 0.0
        else:
            raise ValueError(f"unknown event {event!r}")

    margin_idx = np.flatnonzero(margin)
    if snap_delta != 0.0:
        _restore_after_snap(q, sched, alpha, grad, margin_idx, idx, snap_delta,
                            c_plus, c_minus, labels, cg_tol)
    tol_active = 1e-9 * (1.0 + float(np.abs(grad).max(initial=0.0)))
    return DualState(
        tau=tau2, alpha=alpha, grad=grad,
        left=left, margin=margin, right=right,
        margin_idx=margin_idx, dalpha=np.zeros(len(margin_idx)),
        tol_active=tol_active,
    )


def _restore_after_snap(q, sched, alpha, grad, margin_idx, idx, snap_delta,
                        c_plus, c_minus, labels, cg_tol):
    """Re-balance the margin block after an index was snapped onto a face.

    Solves Q[M,M] xi = -snap_delta * Q[M, idx] so that the margin
    gradients return to zero, then applies the exact gradient shift of
    both the snap and the correction to every index in one pass.
    """
    row_idx = q.row_dense(idx)
    h = snap_delta * row_idx
    if len(margin_idx):
        rhs = -snap_delta * np.asarray(q.rows_block(margin_idx) @ row_idx).ravel()
        try:
            xi = cg_solve(q, margin_idx, rhs, tol=cg_tol).x
        except LinSolveError:
            xi = np.zeros(len(margin_idx))
        upper_m = np.where(labels[margin_idx] > 0, c_plus, c_minus)
        alpha[margin_idx] = np.clip(alpha[margin_idx] + xi, 0.0, upper_m)
        h = h + q.col_accumulate(margin_idx, weights=xi)
    grad += q.row_products(h) / sched.lam
    grad[margin_idx] = 0.0


def _snap_to_active_sets(q, sched, tau, alpha0, gtol, cg_tol, max_sweeps=40):
    """Project an approximate box-QP solution onto a KKT-consistent partition.

    Classifies by bound proximity and gradient sign, then re-solves the
    margin block through its linear system and re-checks, iterating until
    the sign pattern is self-consistent.  Returns (alpha, grad, left,
    margin) with margin gradients forced to exactly zero.
    """
    lam = sched.lam
    labels = q.labels
    upper = upper_bounds(sched, labels, tau)
    bound_atol = 1e-9 * (1.0 + upper.max())
    alpha = np.clip(np.asarray(alpha0, float), 0.0, upper)
    grad = gradient(q, lam, alpha)
    best = None
    for _ in range(max_sweeps):
        near0 = alpha <= bound_atol
        near_up = alpha >= upper - bound_atol
        to_right = near0 & (grad > gtol)
        to_left = near_up & (grad < -gtol)
        margin = ~(to_right | to_left)
        midx = np.flatnonzero(margin)

        alpha_new = np.zeros_like(alpha)
        alpha_new[to_left] = upper[to_left]
        if len(midx):
            lp = to_left & (labels > 0)
            lm = to_left & (labels < 0)
            c_plus, c_minus = costs_at(sched, tau)
            h = c_plus * q.col_accumulate(np.flatnonzero(lp)) \
                + c_minus * q.col_accumulate(np.flatnonzero(lm))
            rhs = lam - np.asarray(q.rows_block(midx) @ h).ravel()
            try:
                sol = cg_solve(q, midx, rhs, tol=cg_tol)
            except LinSolveError:
                break
            alpha_new[midx] = np.clip(sol.x, 0.0, upper[midx])
        grad_new = gradient(q, lam, alpha_new)
        res = projected_residual(alpha_new, grad_new, upper)
        if best is None or res < best[0]:
            best = (res, alpha_new, grad_new, to_left.copy(), margin.copy())
        if res <= gtol:
            break
        alpha, grad = alpha_new, grad_new
    if best is None:  # no margin solve ever succeeded; keep the raw solution
        near0 = alpha <= bound_atol
        near_up = alpha >= upper - bound_atol
        to_left = near_up & (grad < -gtol)
        margin = ~((near0 & (grad > gtol)) | to_left)
        best = (projected_residual(alpha, grad, upper), alpha, grad, to_left, margin)
    _, alpha, grad, left, margin = best
    grad = grad.copy()
    grad[margin] = 0.0
    return alpha, grad, left, margin


def _make_state(tau, alpha, grad, left, margin, q, cg_tol, labels):
    right = ~(left | margin)
    margin_idx = np.flatnonzero(margin)
    lp = np.flatnonzero(left & (labels > 0))
    lm = np.flatnonzero(left & (labels < 0))
    dalpha = segment_slope(q, margin_idx, lp, lm, tol=cg_tol)
    tol_active = 1e-9 * (1.0 + float(np.abs(grad).max(initial=0.0)))
    return DualState(tau=tau, alpha=alpha, grad=grad, left=left, margin=margin,
                     right=right, margin_idx=margin_idx, dalpha=dalpha,
                     tol_active=tol_active)


def _warm_start_state(q, sched, opts):
    n = sched.n
    c_plus, c_minus = costs_at(sched, 0.0)
    upper = upper_bounds(sched, q.labels, 0.0)
    box_tol = opts.box_tol if opts.box_tol is not None else \
        1e-8 * n * max(c_plus, c_minus)
    res = solve_box_qp(q, sched.lam, upper, tol=box_tol, max_iter=opts.box_max_iter)
    gtol = max(10.0 * box_tol, 1e-12)
    alpha, grad, left, margin = _snap_to_active_sets(
        q, sched, 0.0, res.alpha, gtol, opts.cg_tol)
    return _make_state(0.0, alpha, grad, left, margin, q, opts.cg_tol, q.labels)


def _pick_event(cands):
    """Min-eps event; ties resolved margin-entry first, then bound, then zero."""
    best = None
    for eps, event, idx in cands:
        if idx is None or not math.isfinite(eps):
            continue
        key = (eps, _EVENT_PRIORITY[event])
        if best is None or key < best[0]:
            best = (key, eps, event, idx)
    if best is None:
        return math.inf, None, None
    return best[1], best[2], best[3]


def trace_path(ds: Dataset, lam: float, options: TraceOptions | None = None) -> KinkPath:
    """Trace the entire dual path over tau in [0, 1].

    Warm-starts with a box-QP solve at tau = 0, then advances event to
    event.  Coincident events appear as zero-eps steps that overwrite the
    last kink, so recorded kink positions are strictly increasing.  Raises
    :class:`BudgetExhaustedError` ("path budget exhausted") or
    :class:`DegenerateCyclingError` ("degenerate cycling") with the
    partial path attached.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    opts = options or TraceOptions()
    q = QOperator(ds)
    labels = q.labels
    n = ds.n
    sched = CostSchedule(n=n, lam=lam)
    budget = opts.event_budget if opts.event_budget is not None else \
        int(20 * n * max(math.log(n), 1.0) + 100)

    state = _warm_start_state(q, sched, opts)
    kinks = [Kink(tau=0.0, event=EVENT_START, moves=[],
                  alpha_margin=state.alpha[state.margin_idx].copy(),
                  dalpha_margin=state.dalpha.copy())]
    initial_left = np.flatnonzero(state.left)
    initial_margin = state.margin_idx.copy()

    def assemble(complete, terminal_tau, events):
        return KinkPath(
            lam=lam, n=n, d=ds.d, bias_augmented=ds.bias_augmented,
            fingerprint=fingerprint(ds),
            initial_left=initial_left, initial_margin=initial_margin,
            kinks=kinks, terminal_tau=terminal_tau, complete=complete,
            events_total=events, labels=np.asarray(ds.labels, float),
        )

    events = 0
    zero_run = 0
    sums = LeftSums(q, labels, state.left)
    den = _den_vector(q, state, labels, sums=sums)
    # anti-cycling: an index that entered and left the margin at one tau is
    # barred from re-entering until tau moves (degenerate ties otherwise
    # ping-pong forever at noise level)
    blocked = np.zeros(n, dtype=bool)
    entered_here: set[int] = set()
    while state.tau < 1.0:
        e_m, i_m = eps_to_margin(state, q, sched, den=den, blocked=blocked)
        e_l, i_l = eps_to_left(state, sched, labels)
        e_r, i_r = eps_to_right(state, sched)
        eps, event, idx = _pick_event([
            (e_m, EVENT_TO_MARGIN, i_m),
            (e_l, EVENT_TO_LEFT, i_l),
            (e_r, EVENT_TO_RIGHT, i_r),
        ])
        remaining = 1.0 - state.tau
        if eps >= remaining:
            state = advance(state, q, sched, remaining, den=den, copy=False)
            state = replace(state, tau=1.0)
            break

        events += 1
        if events > budget:
            raise BudgetExhaustedError(
                "path budget exhausted",
                partial=assemble(False, state.tau, events - 1))
        prev_tau = state.tau
        src = "L" if state.left[idx] else ("M" if state.margin[idx] else "R")
        dst = {"to_margin": "M", "to_left": "L", "to_right": "R"}[event]
        state = advance(state, q, sched, eps, event, idx, den=den,
                        cg_tol=opts.cg_tol, copy=False)
        sums.move(idx, src, dst)
        state.dalpha = segment_slope(q, state.margin_idx, tol=opts.cg_tol,
                                     left_diff=sums.u_plus - sums.u_minus)
        den = _den_vector(q, state, labels, sums=sums)

        move = (int(idx), src, dst)
        if state.tau != prev_tau:
            blocked[:] = False
            entered_here.clear()
        if event == EVENT_TO_MARGIN:
            entered_here.add(idx)
        elif idx in entered_here:
            blocked[idx] = True
        if state.tau == prev_tau:
            zero_run += 1
            if zero_run > n:
                raise DegenerateCyclingError(
                    "degenerate cycling",
                    partial=assemble(False, state.tau, events))
            k = kinks[-1]
            k.event = event
            k.alpha_margin = state.alpha[state.margin_idx].copy()
            k.dalpha_margin = state.dalpha.copy()
            if len(kinks) == 1:
                # cascade at tau=0 folds into the initial sets
                initial_left = np.flatnonzero(state.left)
                initial_margin = state.margin_idx.copy()
                k.moves = []
            else:
                k.moves.append(move)
        else:
            zero_run = 0
            kinks.append(Kink(tau=state.tau, event=event, moves=[move],
                              alpha_margin=state.alpha[state.margin_idx].copy(),
                              dalpha_margin=state.dalpha.copy()))

        if events % opts.drift_interval == 0:
            state, den, repaired = _drift_control(q, sched, state, opts)
            sums.refresh(state.left)
            den = _den_vector(q, state, labels, sums=sums)
            if repaired is not None:
                # membership edits from a corrective re-solve land on the
                # current kink so that set replay stays exact
                k = kinks[-1]
                k.moves.extend(repaired)
                k.alpha_margin = state.alpha[state.margin_idx].copy()
                k.dalpha_margin = state.dalpha.copy()
                if len(kinks) == 1:
                    initial_left = np.flatnonzero(state.left)
                    initial_margin = state.margin_idx.copy()
                    k.moves = []

    return assemble(True, 1.0, events)


def _drift_control(q, sched, state, opts):
    """Periodic accuracy maintenance for the incremental gradient and duals.

    Recomputes the gradient from scratch; on disagreement beyond 1e-7 the
    fresh value replaces the tracked one and the segment slope is
    re-derived.  If the dual values no longer match their sets beyond 1e-8
    (or the margin gradient has genuinely drifted), the box QP is re-solved
    at the current tau warm-started from alpha and the partition is
    re-snapped; returns the membership moves this caused.
    """
    labels = q.labels
    lam = sched.lam
    fresh = gradient(q, lam, state.alpha)
    if float(np.abs(fresh - state.grad).max(initial=0.0)) > 1e-7:
        grad = fresh.copy()
        grad[state.margin_idx] = 0.0
        state = replace(state, grad=grad)
        lp = np.flatnonzero(state.left & (labels > 0))
        lm = np.flatnonzero(state.left & (labels < 0))
        state.dalpha = segment_slope(q, state.margin_idx, lp, lm, tol=opts.cg_tol)

    upper = upper_bounds(sched, labels, state.tau)
    g_scale = 1e-6 * (1.0 + float(np.abs(fresh).max(initial=0.0)))
    pattern_bad = False
    if np.any(state.left):
        pattern_bad |= float(np.abs(state.alpha[state.left] - upper[state.left]).max()) > 1e-8
        pattern_bad |= float(fresh[state.left].max()) > g_scale
    if np.any(state.right):
        pattern_bad |= float(state.alpha[state.right].max()) > 1e-8
        pattern_bad |= float(fresh[state.right].min()) < -g_scale
    if len(state.margin_idx):
        am = state.alpha[state.margin_idx]
        pattern_bad |= bool(np.any(am < -1e-8) or np.any(am > upper[state.margin_idx] + 1e-8))
        pattern_bad |= float(np.abs(fresh[state.margin_idx]).max()) > g_scale

    moves = None
    if pattern_bad:
        c_plus, c_minus = costs_at(sched, state.tau)
        box_tol = opts.box_tol if opts.box_tol is not None else \
            1e-8 * sched.n * max(c_plus, c_minus, 2.0 / sched.n)
        res = solve_box_qp(q, lam, upper, tol=box_tol,
                           max_iter=opts.box_max_iter, warm_start=state.alpha)
        gtol = max(10.0 * box_tol, 1e-12)
        alpha, grad, left, margin = _snap_to_active_sets(
            q, sched, state.tau, res.alpha, gtol, opts.cg_tol)
        # accept the repair only if it actually improves the KKT pattern,
        # otherwise repeated re-solves can thrash on degenerate faces
        old_res = projected_residual(state.alpha, fresh, upper)
        new_res = projected_residual(alpha, gradient(q, lam, alpha), upper)
        if new_res < old_res:
            moves = _diff_sets(state, left, margin)
            state = _make_state(state.tau, alpha, grad, left, margin, q,
                                opts.cg_tol, labels)
    den = _den_vector(q, state, labels)
    return state, den, moves


def _diff_sets(state, new_left, new_margin):
    codes_old = np.where(state.left, 0, np.where(state.margin, 1, 2))
    codes_new = np.where(new_left, 0, np.where(new_margin, 1, 2))
    names = "LMR"
    return [(int(i), names[codes_old[i]], names[codes_new[i]])
            for i in np.flatnonzero(codes_old != codes_new)]
