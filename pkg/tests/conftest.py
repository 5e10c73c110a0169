"""Shared data generators and cached path/oracle runs for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from quantpath import CostSchedule, Dataset, QOperator, augment_bias, trace_path
from quantpath import oracle


def blob_dataset(seed: int, n: int | None = None, d: int | None = None,
                 sep: float = 2.5, spread: float = 1.0,
                 bias: bool = True) -> Dataset:
    """Two Gaussian class clouds separated along the first axis.

    n and d default to seed-determined draws from [10, 40] and [2, 5].
    Both classes are always present.
    """
    rng = np.random.default_rng(seed)
    if n is None:
        n = int(rng.integers(10, 41))
    if d is None:
        d = int(rng.integers(2, 6))
    labels = np.where(rng.random(n) < 0.5, 1, -1)
    if np.all(labels == labels[0]):
        labels[0] = -labels[0]
    X = spread * rng.standard_normal((n, d))
    X[:, 0] += sep * labels
    rows = [{j: float(X[i, j]) for j in range(d) if X[i, j] != 0.0}
            for i in range(n)]
    ds = Dataset(rows=rows, labels=labels, n=n, d=d)
    return augment_bias(ds) if bias else ds


def one_point_dataset() -> Dataset:
    """Single instance x=[1], y=+1 (closed-form path)."""
    return Dataset(rows=[{0: 1.0}], labels=np.array([1]), n=1, d=1)


def two_point_dataset() -> Dataset:
    """x1=[1] (+1) and x2=[1] (-1): one segment, alpha = (1-tau, tau)."""
    return Dataset(rows=[{0: 1.0}, {0: 1.0}], labels=np.array([1, -1]), n=2, d=1)


class PathRun:
    """A traced path bundled with its dense-oracle ingredients."""

    def __init__(self, ds: Dataset, lam: float):
        self.ds = ds
        self.lam = lam
        self.path = trace_path(ds, lam)
        self.q = QOperator(ds)
        self.sched = CostSchedule(n=ds.n, lam=lam)
        self.Q_dense = oracle.dense_q(ds)
        self._ref = {}

    def reference_alpha(self, tau: float) -> np.ndarray:
        if tau not in self._ref:
            self._ref[tau] = oracle.solve_at_tau(self.ds, self.lam, tau,
                                                 Q=self.Q_dense)
        return self._ref[tau]


@pytest.fixture(scope="session")
def oracle_pool():
    """The 20 seeded datasets traced at both regularization levels."""
    runs = []
    for seed in range(20):
        ds = blob_dataset(seed)
        for lam in (1e-1, 1e-3):
            runs.append(PathRun(ds, lam))
    return runs
