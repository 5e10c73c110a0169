"""O(n) recovery of dual and primal solutions at any tau from a traced path."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .dualpath import KinkPath, costs_at, delta_cost, CostSchedule


@dataclass
class PrimalModel:
    """Weight vector at a fixed tau; bias folded into the last coordinate
    when the training data was bias-augmented."""

    w: np.ndarray
    tau: float
    lam: float


class _Replay:
    """Set reconstruction with sqrt-spaced checkpoints.

    Snapshots of (left mask, margin mask) every ceil(sqrt(K)) kinks keep a
    query to at most ~sqrt(K) delta replays; deltas touch single indices,
    so reconstruction stays O(n) per query.
    """

    def __init__(self, path: KinkPath):
        self.path = path
        self.taus = [k.tau for k in path.kinks]
        n = path.n
        k_count = len(path.kinks)
        self.stride = max(1, math.isqrt(k_count - 1) if k_count > 1 else 1)
        left = np.zeros(n, dtype=bool)
        left[path.initial_left] = True
        margin = np.zeros(n, dtype=bool)
        margin[path.initial_margin] = True
        self.checkpoints = {0: (left.copy(), margin.copy())}
        for j in range(1, k_count):
            self._apply_moves(left, margin, path.kinks[j].moves)
            if j % self.stride == 0:
                self.checkpoints[j] = (left.copy(), margin.copy())

    @staticmethod
    def _apply_moves(left, margin, moves):
        for idx, src, dst in moves:
            if src == "L":
                left[idx] = False
            elif src == "M":
                margin[idx] = False
            if dst == "L":
                left[idx] = True
            elif dst == "M":
                margin[idx] = True

    def sets_at(self, seg: int):
        base = (seg // self.stride) * self.stride
        while base not in self.checkpoints:
            base -= self.stride
        left, margin = self.checkpoints[base]
        left, margin = left.copy(), margin.copy()
        for j in range(base + 1, seg + 1):
            self._apply_moves(left, margin, self.path.kinks[j].moves)
        return left, margin

    def segment_of(self, tau: float) -> int:
        return max(0, bisect.bisect_right(self.taus, tau) - 1)


def _replay(path: KinkPath) -> _Replay:
    cache = path.__dict__.get("_replay_cache")
    if cache is None:
        cache = _Replay(path)
        path.__dict__["_replay_cache"] = cache
    return cache


def alpha_at(path: KinkPath, tau: float) -> np.ndarray:
    """Reconstruct the full dual vector at tau from the kink list."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau={tau} outside [0, 1]")
    if not path.complete:
        raise ValueError("path is incomplete; cannot recover")
    if path.labels is None:
        raise ValueError("path carries no labels; attach the training dataset")
    rep = _replay(path)
    seg = rep.segment_of(tau)
    kink = path.kinks[seg]
    left, margin = rep.sets_at(seg)

    sched = CostSchedule(n=path.n, lam=path.lam)
    c_plus, c_minus = costs_at(sched, tau)
    labels = path.labels
    alpha = np.zeros(path.n)
    alpha[left & (labels > 0)] = c_plus
    alpha[left & (labels < 0)] = c_minus
    midx = np.flatnonzero(margin)
    if len(midx):
        dc = delta_cost(sched, tau - kink.tau)
        alpha[midx] = kink.alpha_margin + dc * kink.dalpha_margin
    return alpha


def primal_at(path: KinkPath, ds: Dataset, tau: float) -> PrimalModel:
    """Primal weights w = (1/lam) * sum_i alpha_i y_i x_i at tau."""
    alpha = alpha_at(path, tau)
    X = ds.feature_matrix()
    y = np.asarray(ds.labels, float)
    w = np.asarray(X.T @ (alpha * y)).ravel() / path.lam
    return PrimalModel(w=w, tau=tau, lam=path.lam)


def predict(model: PrimalModel, x: dict[int, float]) -> int:
    """Label for one sparse instance; the tie w.x = 0 predicts +1."""
    s = 0.0
    for idx, val in x.items():
        if not 0 <= idx < len(model.w):
            raise IndexError(f"feature index {idx} outside [0, {len(model.w)})")
        s += model.w[idx] * val
    return 1 if s >= 0 else -1


def decision_values(model: PrimalModel, ds: Dataset) -> np.ndarray:
    """w.x for every instance of a dataset (one sparse pass)."""
    return np.asarray(ds.feature_matrix() @ model.w).ravel()
