"""Statistical layer: asymmetric risk, KKT certification, tau sweeps,
and a synthetic generator with known conditional class probability."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .dualpath import CostSchedule, KinkPath, costs_at, gradient, upper_bounds
from .qoperator import QOperator
from .recover import decision_values, primal_at


def asym_risk(fp_cost: float, fn_cost: float, fp_rate: float, fn_rate: float) -> float:
    """Cost-weighted misclassification risk: fp_cost*P(FP) + fn_cost*P(FN)."""
    if fp_cost < 0 or fn_cost < 0:
        raise ValueError("costs must be nonnegative")
    return fp_cost * fp_rate + fn_cost * fn_rate


def cost_to_tau(fp_cost: float, fn_cost: float) -> float:
    """Quantile parameter equivalent to a cost pair: fp/(fp+fn).

    Depends only on the cost ratio, so any common rescaling of the two
    costs maps to the same tau.
    """
    if fp_cost < 0 or fn_cost < 0:
        raise ValueError("costs must be nonnegative")
    total = fp_cost + fn_cost
    if total == 0:
        raise ValueError("at least one cost must be positive")
    return fp_cost / total


def conditional_risk(eta: float, tau: float, f: float) -> float:
    """Pointwise risk tau*(1-eta)*(1+f)_+ + (1-tau)*eta*(1-f)_+.

    Minimized over f by sign(eta - tau) whenever eta differs from tau.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    return tau * (1.0 - eta) * max(0.0, 1.0 + f) \
        + (1.0 - tau) * eta * max(0.0, 1.0 - f)


def primal_objective(ds: Dataset, lam: float, tau: float, w: np.ndarray) -> float:
    """Regularized cost-weighted hinge objective at w."""
    w = np.asarray(w, float)
    if w.shape != (ds.d,):
        raise ValueError(f"expected weight vector of length {ds.d}, got {w.shape}")
    sched = CostSchedule(n=ds.n, lam=lam)
    c = upper_bounds(sched, ds.labels, tau)
    margins = np.asarray(ds.feature_matrix() @ w).ravel() * np.asarray(ds.labels, float)
    hinge = np.maximum(0.0, 1.0 - margins)
    return 0.5 * lam * float(w @ w) + float(c @ hinge)


def dual_objective(q: QOperator, lam: float, alpha: np.ndarray) -> float:
    """(1/(2*lam)) a^T Q a - 1^T a, one operator product."""
    alpha = np.asarray(alpha, float)
    return 0.5 * float(alpha @ q.apply(alpha)) / lam - float(alpha.sum())


@dataclass
class KKTReport:
    max_stationarity: float
    max_complementarity: float
    feasibility_violation: float
    passed: bool

    def worst(self) -> float:
        return max(self.max_stationarity, self.max_complementarity,
                   self.feasibility_violation)


def kkt_check(q: QOperator, lam: float, tau: float, sched: CostSchedule,
              alpha: np.ndarray, tol: float, bound_atol: float = 1e-9) -> KKTReport:
    """Residuals of the box-QP optimality system at alpha.

    Multipliers are reconstructed from the gradient: the lower-bound
    multiplier absorbs positive gradient where alpha ~ 0, the upper-bound
    multiplier absorbs negative gradient where alpha ~ c.  At a zero-cost
    bound (c = 0) both reconstructions apply.
    """
    alpha = np.asarray(alpha, float)
    grad = gradient(q, lam, alpha)
    upper = upper_bounds(sched, q.labels, tau)

    at_low = alpha <= bound_atol
    at_up = alpha >= upper - bound_atol
    beta = np.where(at_low, np.maximum(grad, 0.0), 0.0)
    gamma = np.where(at_up, np.maximum(-grad, 0.0), 0.0)

    stationarity = np.abs(grad - beta + gamma)
    complementarity = np.maximum(np.abs(beta * alpha),
                                 np.abs(gamma * (alpha - upper)))
    feas = max(0.0, float((-alpha).max(initial=0.0)),
               float((alpha - upper).max(initial=0.0)))
    report = KKTReport(
        max_stationarity=float(stationarity.max(initial=0.0)),
        max_complementarity=float(complementarity.max(initial=0.0)),
        feasibility_violation=feas,
        passed=False,
    )
    report.passed = report.worst() <= tol
    return report


@dataclass
class SweepMetrics:
    """Per-tau classification rates on a labeled evaluation set."""

    records: list[tuple[float, float, float, float]] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["tau,tpr,tnr,accuracy"]
        for tau, tpr, tnr, acc in self.records:
            lines.append(f"{tau:.10g},{tpr:.10g},{tnr:.10g},{acc:.10g}")
        return "\n".join(lines) + "\n"


def classification_rates(labels: np.ndarray, predictions: np.ndarray):
    """(tpr, tnr, accuracy); an absent class scores its rate as 1.0."""
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    pos = labels > 0
    neg = ~pos
    p, n_neg = int(pos.sum()), int(neg.sum())
    tpr = float((predictions[pos] > 0).sum() / p) if p else 1.0
    tnr = float((predictions[neg] < 0).sum() / n_neg) if n_neg else 1.0
    acc = float((np.sign(predictions) == np.sign(labels)).mean())
    return tpr, tnr, acc


def sweep(path: KinkPath, train_ds: Dataset, eval_ds: Dataset, taus) -> SweepMetrics:
    """Recover the model at each tau and score it on the evaluation set."""
    if eval_ds.d != train_ds.d:
        raise ValueError("evaluation set feature space differs from training")
    metrics = SweepMetrics()
    y = np.asarray(eval_ds.labels, float)
    for tau in sorted(float(t) for t in taus):
        model = primal_at(path, train_ds, tau)
        scores = decision_values(model, eval_ds)
        preds = np.where(scores >= 0, 1.0, -1.0)  # tie predicts +1
        tpr, tnr, acc = classification_rates(y, preds)
        metrics.records.append((tau, tpr, tnr, acc))
    return metrics


@dataclass(frozen=True)
class SyntheticSpec:
    """Logistic conditional-probability generator.

    Instances are iid standard normal in ``dim`` dimensions scaled by
    ``x_scale``; P(Y=+1 | x) = 1/(1 + exp(-(coef . x + intercept))).  The
    default coefficient vector is 2.0 on the first coordinate and zero
    elsewhere.
    """

    dim: int = 2
    coef: tuple[float, ...] | None = None
    intercept: float = 0.0
    x_scale: float = 1.0
    seed: int = 0

    def coefficients(self) -> np.ndarray:
        if self.coef is not None:
            c = np.asarray(self.coef, float)
            if c.shape != (self.dim,):
                raise ValueError("coef length must equal dim")
            return c
        c = np.zeros(self.dim)
        c[0] = 2.0
        return c

    def eta(self, x: np.ndarray) -> np.ndarray:
        z = np.asarray(x) @ self.coefficients() + self.intercept
        return 1.0 / (1.0 + np.exp(-z))


def generate_synthetic(spec: SyntheticSpec, n: int):
    """Draw n labeled instances; returns (Dataset, true eta per instance)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((n, spec.dim)) * spec.x_scale
    eta = spec.eta(X)
    labels = np.where(rng.random(n) < eta, 1, -1)
    rows = [{j: float(X[i, j]) for j in range(spec.dim) if X[i, j] != 0.0}
            for i in range(n)]
    ds = Dataset(rows=rows, labels=labels, n=n, d=spec.dim)
    return ds, eta
