import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from efla.numerics import as_matrix, dot, matvec_transposed, outer, unit_lower_solve

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_dot_examples():
    assert dot([1, 0], [0, 1]) == 0
    assert dot([1, 2], [3, 4]) == 11
    assert dot([0.6, 0.8], [0.6, 0.8]) == pytest.approx(1.0, abs=1e-15)


def test_dot_length_mismatch():
    with pytest.raises(ValueError):
        dot([1, 2], [1, 2, 3])


def test_outer_examples():
    np.testing.assert_array_equal(outer([1, 0], [2, 3]), [[2, 3], [0, 0]])
    np.testing.assert_array_equal(outer([0, 0], [5, -1]), np.zeros((2, 2)))
    M = outer([1, 1], [1, 1])
    np.testing.assert_array_equal(M, np.ones((2, 2)))
    assert np.trace(M) == 2


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 4, elements=finite))
def test_outer_every_minor_vanishes(a, b):
    M = outer(a, b)
    minors = M[:, None, :, None] * M[None, :, None, :] - M[:, None, None, :] * M[None, :, :, None]
    scale = max(1.0, np.abs(M).max() ** 2)
    assert np.abs(minors).max() <= 1e-12 * scale


def test_matvec_transposed_examples(rng):
    q = rng.standard_normal(4)
    np.testing.assert_array_equal(matvec_transposed(np.eye(4), q), q)
    np.testing.assert_array_equal(matvec_transposed(np.zeros((4, 3)), q), np.zeros(3))
    k = np.array([0.6, 0.8, 0.0, 0.0])
    v = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(matvec_transposed(outer(k, v), k), v, atol=1e-15)


def test_matvec_transposed_shape_mismatch():
    with pytest.raises(ValueError):
        matvec_transposed(np.zeros((3, 2)), np.zeros(2))


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        as_matrix([[1.0, np.nan]])
    with pytest.raises(ValueError):
        dot([np.inf], [1.0])


def test_unit_lower_solve_identity(rng):
    B = rng.standard_normal((5, 3))
    np.testing.assert_array_equal(unit_lower_solve(np.eye(5), B), B)


def test_unit_lower_solve_2x2_closed_form():
    a = 0.37
    X = unit_lower_solve([[1, 0], [a, 1]], np.eye(2))
    np.testing.assert_array_equal(X, [[1, 0], [-a, 1]])


@pytest.mark.parametrize("n", [8, 16, 33, 64])
def test_unit_lower_solve_residual(rng, n):
    L = np.tril(rng.uniform(-1, 1, (n, n)) / np.sqrt(n), -1) + np.eye(n)
    B = rng.standard_normal((n, 4))
    X = unit_lower_solve(L, B)
    tol = 1e-12 if n == 8 else 1e-10
    assert np.abs(L @ X - B).max() <= tol


def test_unit_lower_solve_vector_rhs(rng):
    L = np.tril(rng.standard_normal((6, 6)), -1) + np.eye(6)
    b = rng.standard_normal(6)
    np.testing.assert_allclose(L @ unit_lower_solve(L, b), b, atol=1e-12)


def test_unit_lower_solve_is_deterministic(rng):
    L = np.tril(rng.standard_normal((20, 20)), -1) + np.eye(20)
    B = rng.standard_normal((20, 7))
    assert np.array_equal(unit_lower_solve(L, B), unit_lower_solve(L.copy(), B.copy()))


@pytest.mark.parametrize("L", [
    [[2.0, 0.0], [1.0, 1.0]],
    [[1.0, 0.5], [0.0, 1.0]],
])
def test_unit_lower_solve_rejects_bad_matrix(L):
    with pytest.raises(ValueError):
        unit_lower_solve(L, np.eye(2))
