import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfglab import fit_exponential
from mfglab.fitting import InsufficientDataError


@settings(max_examples=30, deadline=None)
@given(M=st.floats(1e-3, 1e3), rate=st.floats(0.1, 20.0))
def test_one_sided_recovers_exact_parameters(M, rate):
    t = np.linspace(0, 1.0, 50)
    fit = fit_exponential(t, M * np.exp(-rate * t))
    assert fit.rate == pytest.approx(rate, rel=1e-10)
    assert fit.M == pytest.approx(M, rel=1e-10)
    assert fit.residual < 1e-10


@settings(max_examples=20, deadline=None)
@given(rate=st.floats(0.5, 10.0), T=st.floats(2.0, 10.0))
def test_two_sided_recovers_symmetric_profile(rate, T):
    t = np.linspace(0, T, 200)
    y = 2.0 * (np.exp(-rate * t) + np.exp(-rate * (T - t)))
    fit = fit_exponential(t, y, "two_sided", T=T)
    assert fit.rate == pytest.approx(rate, rel=1e-6)
    assert fit.M == pytest.approx(2.0, rel=1e-6)


def test_two_sided_free_recovers_unequal_prefactors():
    T = 6.0
    t = np.linspace(0, T, 300)
    y = 1.0 * np.exp(-2.0 * t) + 5.0 * np.exp(-2.0 * (T - t))
    fit = fit_exponential(t, y, "two_sided_free", T=T)
    assert fit.rate == pytest.approx(2.0, rel=1e-8)
    assert fit.M_left == pytest.approx(1.0, rel=1e-8)
    assert fit.M_right == pytest.approx(5.0, rel=1e-8)
    assert fit.M == pytest.approx(5.0, rel=1e-8)
    np.testing.assert_allclose(fit.predict(t), y, rtol=1e-8)


def test_noisy_rate_within_one_percent():
    rng = np.random.default_rng(0)
    t = np.linspace(0, 2, 100)
    y = np.exp(-2.0 * t) * (1 + 0.01 * rng.standard_normal(t.size))
    assert fit_exponential(t, y).rate == pytest.approx(2.0, rel=0.01)


def test_floor_and_minimum_points():
    t = np.linspace(0, 1, 20)
    y = np.where(t < 0.25, np.exp(-t), 1e-16)
    with pytest.raises(InsufficientDataError):
        fit_exponential(t, y)
    with pytest.raises(ValueError):
        fit_exponential(t, np.exp(-t), "three_sided")
