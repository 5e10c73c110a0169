"""Sparse labeled datasets, LIBSVM text parsing, and bias augmentation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np
import scipy.sparse as sp


class ParseError(ValueError):
    """Malformed LIBSVM input. ``line_no`` is 1-based when available."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass
class Dataset:
    """Sparse instance matrix with labels in {+1, -1}.

    Treated as immutable after construction; operations that change the
    data (e.g. :func:`augment_bias`) return a new instance.  ``rows`` map
    0-based feature index to value, ``d`` counts features after any bias
    augmentation, and with ``bias_augmented`` set every row carries an
    exact 1.0 at index ``d - 1``.
    """

    rows: list[dict[int, float]]
    labels: np.ndarray
    n: int
    d: int
    bias_augmented: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.n < 1:
            raise ValueError("dataset needs at least one instance")
        if len(self.rows) != self.n or len(self.labels) != self.n:
            raise ValueError("rows/labels length mismatch with n")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise ValueError("labels must be +1 or -1")
        for row in self.rows:
            for idx in row:
                if not 0 <= idx < self.d:
                    raise ValueError(f"feature index {idx} outside [0, {self.d})")
        if self.bias_augmented:
            for row in self.rows:
                if row.get(self.d - 1) != 1.0:
                    raise ValueError("bias column missing or not 1.0")

    def feature_matrix(self) -> sp.csr_matrix:
        """CSR view of the instances, shape (n, d). Built once, then cached."""
        if "X" not in self._cache:
            data, indices, indptr = [], [], [0]
            for row in self.rows:
                for idx in sorted(row):
                    indices.append(idx)
                    data.append(row[idx])
                indptr.append(len(indices))
            self._cache["X"] = sp.csr_matrix(
                (np.asarray(data, float), indices, indptr), shape=(self.n, self.d)
            )
        return self._cache["X"]


def _iter_lines(source: str | bytes | IO | Iterable[str]) -> Iterable[str]:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        return source.splitlines()
    if hasattr(source, "read"):
        return source.read().splitlines()
    return source


def parse_libsvm(source: str | bytes | IO | Iterable[str]) -> Dataset:
    """Parse LIBSVM text (``<label> <idx>:<val> ...``, 1-based indices).

    ``#`` starts a comment; blank lines are skipped.  Indices must be
    strictly ascending within a line.  Labels are normalized: any value
    > 0 becomes +1, everything else -1.  Internal indices are 0-based.
    """
    rows: list[dict[int, float]] = []
    labels: list[int] = []
    d = 0
    for line_no, raw in enumerate(_iter_lines(source), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label_val = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", line_no) from None
        if not np.isfinite(label_val):
            raise ParseError(f"non-finite label {tokens[0]!r}", line_no)
        row: dict[int, float] = {}
        prev_idx = 0
        for tok in tokens[1:]:
            idx_s, _, val_s = tok.partition(":")
            if not val_s:
                raise ParseError(f"expected idx:value, got {tok!r}", line_no)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"non-numeric entry {tok!r}", line_no) from None
            if idx < 1:
                raise ParseError(f"index {idx} must be >= 1", line_no)
            if idx <= prev_idx:
                raise ParseError("non-ascending indices", line_no)
            if not np.isfinite(val):
                raise ParseError(f"non-finite value {tok!r}", line_no)
            prev_idx = idx
            row[idx - 1] = val
            d = max(d, idx)
        rows.append(row)
        labels.append(1 if label_val > 0 else -1)
    if not rows:
        raise ParseError("empty input")
    return Dataset(rows=rows, labels=np.asarray(labels), n=len(rows), d=d)


def serialize_libsvm(ds: Dataset) -> str:
    """Canonical LIBSVM text for ``ds`` (1-based ascending indices, 17 sig digits)."""
    lines = []
    for row, label in zip(ds.rows, ds.labels):
        parts = ["+1" if label > 0 else "-1"]
        for idx in sorted(row):
            parts.append(f"{idx + 1}:{row[idx]:.17g}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def augment_bias(ds: Dataset) -> Dataset:
    """Append a constant-1 feature to every instance (folds the bias into w)."""
    if ds.bias_augmented:
        raise ValueError("dataset already bias-augmented")
    rows = [{**row, ds.d: 1.0} for row in ds.rows]
    return Dataset(
        rows=rows,
        labels=ds.labels.copy(),
        n=ds.n,
        d=ds.d + 1,
        bias_augmented=True,
    )


def fingerprint(ds: Dataset) -> str:
    """Content hash of the parsed dataset (whitespace variants collapse)."""
    h = hashlib.sha256()
    h.update(f"bias={int(ds.bias_augmented)} n={ds.n} d={ds.d}\n".encode())
    h.update(serialize_libsvm(ds).encode())
    return h.hexdigest()
