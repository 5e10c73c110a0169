import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantpath import Dataset, QOperator
from tests.conftest import blob_dataset, one_point_dataset, two_point_dataset


def dense_reference(ds):
    # independent dense construction: explicit double loop over rows
    Q = np.zeros((ds.n, ds.n))
    for i in range(ds.n):
        for j in range(ds.n):
            dot = sum(v * ds.rows[j].get(k, 0.0) for k, v in ds.rows[i].items())
            Q[i, j] = ds.labels[i] * ds.labels[j] * dot
    return Q


def test_apply_one_point():
    ds = Dataset(rows=[{0: 1.0, 1: 0.0}], labels=np.array([1]), n=1, d=2)
    q = QOperator(ds)
    assert q.apply(np.array([3.0])) == pytest.approx([3.0])


def test_apply_opposite_pair():
    q = QOperator(two_point_dataset())
    out = q.apply(np.array([1.0, 1.0]))
    assert out == pytest.approx([0.0, 0.0], abs=1e-15)


def test_apply_matches_dense():
    ds = blob_dataset(3, n=6, d=3, bias=False)
    q = QOperator(ds)
    Q = dense_reference(ds)
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.standard_normal(6)
        assert q.apply(v) == pytest.approx(Q @ v, rel=1e-12, abs=1e-12)


def test_apply_length_mismatch():
    q = QOperator(one_point_dataset())
    with pytest.raises(ValueError):
        q.apply(np.zeros(3))


def test_block_ones_sum():
    q = QOperator(two_point_dataset())
    assert q.block_ones_sum(0, []) == 0.0
    assert q.block_ones_sum(0, [1]) == pytest.approx(-1.0)
    ds = blob_dataset(4, n=7, d=2, bias=False)
    q = QOperator(ds)
    Q = dense_reference(ds)
    S = [1, 3, 6]
    for i in range(ds.n):
        assert q.block_ones_sum(i, S) == pytest.approx(Q[i, S].sum(), rel=1e-12)


def test_block_ones_sum_range_check():
    q = QOperator(one_point_dataset())
    with pytest.raises(IndexError):
        q.block_ones_sum(5, [0])
    with pytest.raises(IndexError):
        q.block_ones_sum(0, [2])


def test_sub_apply():
    q = QOperator(one_point_dataset())
    assert q.sub_apply([0], [0], np.array([2.0])) == pytest.approx([2.0])
    assert q.sub_apply([], [0], np.array([2.0])).shape == (0,)
    assert q.sub_apply([0], [], np.zeros(0)) == pytest.approx([0.0])

    ds = blob_dataset(5, n=8, d=3, bias=False)
    q = QOperator(ds)
    Q = dense_reference(ds)
    I, J = [0, 2, 5], [1, 3, 4, 7]
    v = np.random.default_rng(1).standard_normal(len(J))
    assert q.sub_apply(I, J, v) == pytest.approx(Q[np.ix_(I, J)] @ v, rel=1e-12)


def test_sub_apply_length_mismatch():
    q = QOperator(two_point_dataset())
    with pytest.raises(ValueError):
        q.sub_apply([0], [1], np.zeros(2))


def test_apply_consistent_with_sub_apply():
    ds = blob_dataset(6, n=9, d=4, bias=False)
    q = QOperator(ds)
    v = np.random.default_rng(2).standard_normal(9)
    I = [0, 4, 8]
    assert q.sub_apply(I, list(range(9)), v) == pytest.approx(q.apply(v)[I])


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_symmetry_and_psd(seed):
    ds = blob_dataset(seed % 50, n=6 + seed % 5, d=2 + seed % 3, bias=False)
    q = QOperator(ds)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(ds.n)
    v = rng.standard_normal(ds.n)
    lhs = float(u @ q.apply(v))
    rhs = float(v @ q.apply(u))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)
    quad = float(v @ q.apply(v))
    assert quad >= -1e-12 * float(v @ v)


def test_diag():
    ds = blob_dataset(7, n=6, d=3, bias=False)
    q = QOperator(ds)
    Q = dense_reference(ds)
    assert q.diag() == pytest.approx(np.diag(Q), rel=1e-12)


def test_sparse_fallback_matches_dense_path(monkeypatch):
    import quantpath.qoperator as qop
    ds = blob_dataset(8, n=10, d=3, bias=False)
    fast = QOperator(ds)
    monkeypatch.setattr(qop, "_DENSE_BUDGET", 0)
    slow = QOperator(ds)
    assert slow.dense is None and fast.dense is not None
    v = np.random.default_rng(3).standard_normal(10)
    assert slow.apply(v) == pytest.approx(fast.apply(v), rel=1e-14)
    assert slow.block_ones_sum(2, [0, 5]) == pytest.approx(fast.block_ones_sum(2, [0, 5]))
    h = np.random.default_rng(4).standard_normal(3)
    assert slow.row_products(h) == pytest.approx(fast.row_products(h))
    assert slow.col_accumulate([1, 2], weights=[0.5, -1.0]) == pytest.approx(
        fast.col_accumulate([1, 2], weights=[0.5, -1.0]))
