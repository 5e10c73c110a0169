import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantpath import (
    Dataset,
    ParseError,
    augment_bias,
    fingerprint,
    parse_libsvm,
    serialize_libsvm,
)


def test_parse_basic():
    ds = parse_libsvm("+1 1:0.5 3:-2.0\n-1 2:1.0")
    assert ds.n == 2
    assert ds.d == 3
    assert ds.rows[0] == {0: 0.5, 2: -2.0}
    assert ds.rows[1] == {1: 1.0}
    assert list(ds.labels) == [1, -1]
    assert not ds.bias_augmented


def test_parse_empty_input():
    with pytest.raises(ParseError, match="empty"):
        parse_libsvm("")
    with pytest.raises(ParseError, match="empty"):
        parse_libsvm("# only a comment\n\n")


def test_parse_non_ascending():
    with pytest.raises(ParseError, match="line 1.*non-ascending"):
        parse_libsvm("+1 3:1 1:1")
    with pytest.raises(ParseError, match="non-ascending"):
        parse_libsvm("+1 2:1 2:5")  # duplicates count as non-ascending


def test_parse_error_carries_line_number():
    with pytest.raises(ParseError) as exc:
        parse_libsvm("+1 1:1\n-1 2:oops")
    assert exc.value.line_no == 2


def test_parse_bad_label():
    with pytest.raises(ParseError, match="label"):
        parse_libsvm("spam 1:1")


def test_parse_label_normalization():
    ds = parse_libsvm("2 1:1\n0 1:1\n-3 1:1\n0.5 1:1")
    assert list(ds.labels) == [1, -1, -1, 1]


def test_parse_comments_and_crlf():
    ds = parse_libsvm("+1 1:1 # trailing comment\r\n\r\n-1 1:2\r\n")
    assert ds.n == 2
    assert ds.rows[1] == {0: 2.0}


def test_parse_bare_label_line():
    ds = parse_libsvm("+1\n-1 1:1")
    assert ds.rows[0] == {}
    assert ds.d == 1


def test_parse_one_based_indices():
    with pytest.raises(ParseError, match=">= 1"):
        parse_libsvm("+1 0:1")


def test_augment_bias_basic():
    ds = Dataset(rows=[{0: 0.5}], labels=np.array([1]), n=1, d=1)
    out = augment_bias(ds)
    assert out.rows[0] == {0: 0.5, 1: 1.0}
    assert out.d == 2
    assert out.bias_augmented


def test_augment_bias_empty_row():
    ds = Dataset(rows=[{}, {1: 3.0}], labels=np.array([1, -1]), n=2, d=2)
    out = augment_bias(ds)
    assert out.rows[0] == {2: 1.0}
    assert out.d == 3


def test_augment_twice_fails():
    ds = augment_bias(Dataset(rows=[{0: 1.0}], labels=np.array([1]), n=1, d=1))
    with pytest.raises(ValueError, match="already"):
        augment_bias(ds)


def test_augment_preserves_existing():
    ds = parse_libsvm("+1 1:0.5 3:-2.0\n-1 2:1.0")
    out = augment_bias(ds)
    assert out.n == ds.n
    for before, after in zip(ds.rows, out.rows):
        for idx, val in before.items():
            assert after[idx] == val


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(rows=[], labels=np.array([]), n=0, d=1)
    with pytest.raises(ValueError):
        Dataset(rows=[{0: 1.0}], labels=np.array([2]), n=1, d=1)
    with pytest.raises(ValueError):
        Dataset(rows=[{5: 1.0}], labels=np.array([1]), n=1, d=1)
    with pytest.raises(ValueError, match="bias"):
        Dataset(rows=[{0: 0.5}], labels=np.array([1]), n=1, d=1,
                bias_augmented=True)


@st.composite
def libsvm_datasets(draw):
    n = draw(st.integers(1, 6))
    d = draw(st.integers(1, 5))
    finite = st.floats(-1e6, 1e6, allow_nan=False).filter(lambda x: x != 0.0)
    rows = []
    labels = []
    for _ in range(n):
        idxs = draw(st.sets(st.integers(0, d - 1), max_size=d))
        rows.append({i: draw(finite) for i in idxs})
        labels.append(draw(st.sampled_from([1, -1])))
    # keep d consistent with the maximum index actually used
    top = max((max(r) for r in rows if r), default=-1)
    return Dataset(rows=rows, labels=np.array(labels), n=n, d=max(top + 1, 1))


@given(libsvm_datasets())
@settings(max_examples=60)
def test_serialize_parse_round_trip(ds):
    again = parse_libsvm(serialize_libsvm(ds))
    assert again.n == ds.n
    assert again.d == ds.d or all(not r for r in ds.rows)
    assert list(again.labels) == list(ds.labels)
    assert again.rows == ds.rows


def test_fingerprint_ignores_whitespace():
    a = parse_libsvm("+1 1:0.5  3:-2.0\n-1   2:1.0\n")
    b = parse_libsvm("+1 1:0.5 3:-2.0   # comment\r\n-1 2:1.0")
    assert fingerprint(a) == fingerprint(b)
    c = parse_libsvm("+1 1:0.5 3:-2.0\n-1 2:1.5")
    assert fingerprint(a) != fingerprint(c)
    assert fingerprint(augment_bias(a)) != fingerprint(a)
