import numpy as np
import pytest

from quantpath import (
    BoxQPError,
    Dataset,
    QOperator,
    cg_solve,
    solve_box_qp,
)
from quantpath import oracle
from tests.conftest import blob_dataset, one_point_dataset


def test_scalar_interior_optimum():
    # D(a) = a^2/2 - a on [0, 2]: minimum at a = 1, D = -0.5
    q = QOperator(one_point_dataset())
    res = solve_box_qp(q, lam=1.0, upper=np.array([2.0]), tol=1e-12)
    assert res.alpha == pytest.approx([1.0], abs=1e-12)
    assert res.objective == pytest.approx(-0.5, abs=1e-12)
    assert res.grad_residual <= 1e-12


def test_scalar_clamped_at_bound():
    # upper 0.4: minimum of a^2/2 - a clamps, D = 0.08 - 0.4 = -0.32
    q = QOperator(one_point_dataset())
    res = solve_box_qp(q, lam=1.0, upper=np.array([0.4]), tol=1e-12)
    assert res.alpha == pytest.approx([0.4], abs=1e-14)
    assert res.objective == pytest.approx(-0.32, abs=1e-14)


def test_all_bounds_zero():
    ds = blob_dataset(0, n=5, d=2, bias=False)
    q = QOperator(ds)
    res = solve_box_qp(q, lam=1.0, upper=np.zeros(5), tol=1e-10)
    assert res.alpha == pytest.approx(np.zeros(5))
    assert res.objective == 0.0


def test_objective_monotone():
    ds = blob_dataset(1, n=25, d=3)
    q = QOperator(ds)
    values = []
    solve_box_qp(q, lam=1e-2, upper=np.full(25, 2 / 25), tol=1e-10,
                 callback=lambda it, x, f: values.append(f))
    assert len(values) > 1
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_oracle_agreement(seed):
    ds = blob_dataset(seed, n=10 + 4 * seed, d=3)
    n = ds.n
    q = QOperator(ds)
    rng = np.random.default_rng(seed)
    upper = rng.uniform(0.0, 2.0 / n, size=n)
    upper[rng.integers(0, n)] = 0.0
    for lam in (1e-1, 1e-3):
        res = solve_box_qp(q, lam, upper, tol=1e-12 * n)
        Q = oracle.dense_q(ds)
        ref = oracle.solve_box_qp_dense(Q, lam, upper)
        assert res.objective == pytest.approx(
            oracle.dual_value(Q, lam, ref), abs=1e-8)


def test_max_iter_error_carries_iterate():
    ds = blob_dataset(2, n=20, d=3)
    q = QOperator(ds)
    with pytest.raises(BoxQPError) as exc:
        solve_box_qp(q, 1e-3, np.full(20, 0.1), tol=1e-14, max_iter=2)
    assert exc.value.alpha.shape == (20,)
    assert exc.value.residual > 0


def test_invalid_arguments():
    q = QOperator(one_point_dataset())
    with pytest.raises(ValueError):
        solve_box_qp(q, 1.0, np.array([-0.1]), tol=1e-8)
    with pytest.raises(ValueError):
        solve_box_qp(q, 1.0, np.array([1.0]), tol=0.0)


def test_cg_empty_system():
    q = QOperator(one_point_dataset())
    res = cg_solve(q, [], np.zeros(0))
    assert res.converged
    assert res.x.shape == (0,)
    assert res.relative_residual == 0.0


def test_cg_one_point():
    q = QOperator(one_point_dataset())
    res = cg_solve(q, [0], np.array([3.0]))
    assert res.x == pytest.approx([3.0], rel=1e-12)
    assert res.converged


def test_cg_singular_consistent():
    # two identical positive points: Q_MM is the all-ones (singular) matrix;
    # any x with x0 + x1 = 1 solves it, so only the residual is checked
    ds = Dataset(rows=[{0: 1.0}, {0: 1.0}], labels=np.array([1, 1]), n=2, d=1)
    q = QOperator(ds)
    res = cg_solve(q, [0, 1], np.array([1.0, 1.0]), tol=1e-10)
    assert res.converged
    assert res.relative_residual <= 1e-10


def test_cg_spd_converges_within_cap():
    # rows are linearly independent (d > m), so Q_MM is positive definite
    rng = np.random.default_rng(9)
    m, d = 10, 14
    X = rng.standard_normal((m, d))
    rows = [{j: float(X[i, j]) for j in range(d)} for i in range(m)]
    ds = Dataset(rows=rows, labels=np.where(rng.random(m) < 0.5, 1, -1),
                 n=m, d=d)
    q = QOperator(ds)
    rhs = rng.standard_normal(m)
    res = cg_solve(q, list(range(m)), rhs, tol=1e-10, max_iter=10 * m)
    assert res.converged
    assert res.iterations <= 10 * m
    assert res.relative_residual <= 1e-10


def test_cg_length_mismatch():
    q = QOperator(one_point_dataset())
    with pytest.raises(ValueError):
        cg_solve(q, [0], np.zeros(2))
