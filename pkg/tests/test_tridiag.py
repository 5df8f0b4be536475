import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from mfglab import SingularSystemError
from mfglab.tridiag import periodic_tridiagonal_matvec, solve_periodic_tridiagonal


def _dense(lower, diag, upper):
    n = diag.size
    A = np.diag(diag) + np.diag(upper[:-1], 1) + np.diag(lower[1:], -1)
    A[0, -1] += lower[0]
    A[-1, 0] += upper[-1]
    return A


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 64), seed=st.integers(0, 2**32 - 1))
def test_matches_dense_solve_for_diagonally_dominant_systems(n, seed):
    rng = np.random.default_rng(seed)
    lower, upper = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.standard_normal(n)
    x = solve_periodic_tridiagonal(lower, diag, upper, rhs)
    assert_allclose(x, np.linalg.solve(_dense(lower, diag, upper), rhs), atol=1e-12)
    assert_allclose(periodic_tridiagonal_matvec(lower, diag, upper, x), rhs, atol=1e-12)


def test_multiple_right_hand_sides():
    n = 16
    lower = upper = np.full(n, -1.0)
    diag = np.full(n, 3.0)
    rhs = np.arange(2 * n, dtype=float).reshape(n, 2)
    x = solve_periodic_tridiagonal(lower, diag, upper, rhs)
    assert x.shape == (n, 2)
    assert_allclose(_dense(lower, diag, upper) @ x, rhs, atol=1e-12)


def test_singular_periodic_laplacian_is_reported():
    n = 8
    with pytest.raises(SingularSystemError):
        solve_periodic_tridiagonal(np.full(n, 1.0), np.full(n, -2.0), np.full(n, 1.0),
                                   np.ones(n))
