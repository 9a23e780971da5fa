import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sgcnet.embedding import as_vec, cosine_sim, l2_normalize, matvec
from sgcnet.errors import DimMismatch, NonFinite, ZeroVector

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def nonzero_vecs(dim):
    return arrays(np.float64, dim, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


def test_l2_normalize_examples():
    np.testing.assert_allclose(l2_normalize([3, 4]), [0.6, 0.8], atol=1e-15)
    np.testing.assert_array_equal(l2_normalize([1, 0]), [1, 0])
    with pytest.raises(ZeroVector):
        l2_normalize([0, 0])


def test_cosine_examples():
    assert cosine_sim([0.2, 0.9], [0.2, 0.9]) == pytest.approx(1.0, abs=1e-15)
    assert cosine_sim([1, 0], [0, 1]) == 0.0
    assert cosine_sim([1, 0], [1, 1]) == pytest.approx(1 / math.sqrt(2), abs=1e-9)


def test_cosine_errors():
    with pytest.raises(DimMismatch):
        cosine_sim([1, 0], [1, 0, 0])
    with pytest.raises(ZeroVector):
        cosine_sim([0, 0], [1, 0])


def test_matvec():
    np.testing.assert_array_equal(matvec(np.eye(2), [3, 7]), [3, 7])
    np.testing.assert_array_equal(matvec([[1, 2], [3, 4]], [1, 1]), [3, 7])
    with pytest.raises(DimMismatch):
        matvec(np.ones((2, 3)), [1, 1])


def test_as_vec_rejects_nan():
    with pytest.raises(NonFinite):
        as_vec([1.0, float("nan")])


@given(nonzero_vecs(5), nonzero_vecs(5))
def test_cosine_symmetric(a, b):
    assert cosine_sim(a, b) == cosine_sim(b, a)


@given(nonzero_vecs(4), st.floats(1e-3, 1e3))
def test_cosine_positive_scaling(a, c):
    assert cosine_sim(a, c * a) == pytest.approx(1.0, abs=1e-12)


@given(nonzero_vecs(6))
def test_normalize_idempotent(v):
    once = l2_normalize(v)
    np.testing.assert_allclose(l2_normalize(once), once, atol=1e-12)
    assert np.linalg.norm(once) == pytest.approx(1.0, abs=1e-12)
