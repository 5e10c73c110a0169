"""Implicit label-signed Gram operator Q, with Q[i,j] = y_i y_j <x_i, x_j>.

Q is never materialized.  With S the row matrix of y_i * x_i, products are
computed as Q v = S (S^T v): two sparse passes, O(nnz) each.  Sub-block
products restrict the same scheme to row/column subsets.  When n*d is
small enough, a dense copy of S is kept as well; row slicing on it is far
cheaper than CSR fancy indexing, which dominates the path tracer's inner
loop.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .dataset import Dataset

_DENSE_BUDGET = 4_000_000  # entries of S kept densely at most


class QOperator:
    """Matrix-free products with the label-signed Gram matrix of a dataset."""

    def __init__(self, ds: Dataset):
        self.dataset = ds
        self.n = ds.n
        self.labels = np.asarray(ds.labels, dtype=float)
        X = ds.feature_matrix()
        self.signed = X.multiply(self.labels.reshape(-1, 1)).tocsr()
        self.dense = self.signed.toarray() if ds.n * ds.d <= _DENSE_BUDGET else None
        self._diag = None

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Q v for a full-length vector v."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {v.shape}")
        if self.dense is not None:
            return self.dense @ (self.dense.T @ v)
        return self.signed @ (self.signed.T @ v)

    def rows_block(self, S) -> np.ndarray | sp.csr_matrix:
        """The signed rows indexed by S, densely when available."""
        S = np.asarray(S, dtype=int)
        if self.dense is not None:
            return self.dense[S]
        return self.signed[S]

    def row_dense(self, i: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[i]
        return self.signed[[i]].toarray().ravel()

    def sub_apply(self, I, J, v) -> np.ndarray:
        """Q[I, J] v for index sets I, J and |J|-length v."""
        I = self._check_indices(I)
        J = self._check_indices(J)
        v = np.asarray(v, dtype=float)
        if v.shape != (len(J),):
            raise ValueError(f"expected vector of length {len(J)}, got {v.shape}")
        if len(I) == 0:
            return np.zeros(0)
        if len(J) == 0:
            return np.zeros(len(I))
        return np.asarray(self.rows_block(I) @ (self.rows_block(J).T @ v)).ravel()

    def block_ones_sum(self, i: int, S) -> float:
        """sum_{j in S} Q[i, j]; zero for empty S."""
        if not 0 <= i < self.n:
            raise IndexError(f"row index {i} outside [0, {self.n})")
        S = self._check_indices(S)
        if len(S) == 0:
            return 0.0
        return float(self.row_dense(i) @ self.col_accumulate(S))

    def col_accumulate(self, S, weights=None) -> np.ndarray:
        """Feature-space sum over rows in S, optionally weighted: sum_j w_j y_j x_j."""
        S = np.asarray(S, dtype=int)
        if len(S) == 0:
            return np.zeros(self.signed.shape[1])
        block = self.rows_block(S)
        if weights is None:
            return np.asarray(block.sum(axis=0)).ravel()
        return np.asarray(block.T @ np.asarray(weights, dtype=float)).ravel()

    def row_products(self, h: np.ndarray) -> np.ndarray:
        """Dot of every signed row with a feature-space vector h: (S h)_i."""
        h = np.asarray(h, dtype=float)
        if self.dense is not None:
            return self.dense @ h
        return np.asarray(self.signed @ h).ravel()

    def diag(self) -> np.ndarray:
        """Q[i, i] = ||x_i||^2, cached."""
        if self._diag is None:
            if self.dense is not None:
                self._diag = np.einsum("ij,ij->i", self.dense, self.dense)
            else:
                sq = self.signed.multiply(self.signed)
                self._diag = np.asarray(sq.sum(axis=1)).ravel()
        return self._diag

    def _check_indices(self, S) -> np.ndarray:
        S = np.asarray(S, dtype=int).ravel()
        if len(S) and (S.min() < 0 or S.max() >= self.n):
            raise IndexError(f"index set outside [0, {self.n})")
        return S
