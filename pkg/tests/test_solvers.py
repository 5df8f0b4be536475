import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import make_p0, make_p1
from mfglab import (
    ConvergenceError,
    CouplingSpec,
    Field,
    PathField,
    SolverConfig,
    TerminalSpec,
    TimeGrid,
    build_grid,
    hjb_backward_path,
    mode,
    parse_expr,
    solve_discounted_evolution,
    solve_discounted_stationary,
    solve_ergodic,
    solve_finite_horizon,
    solve_infinite_horizon,
    solve_theta,
    theta_identity,
)


def test_trivial_problem_stays_at_rest(cfg):
    sol = solve_finite_horizon(make_p0(32), 1.0, cfg)
    assert np.max(np.abs(sol.u_path.frames)) <= 1e-12
    assert np.max(np.abs(sol.m_path.frames - 1.0)) <= 1e-12


@pytest.mark.parametrize("delta", [0.05, 0.5, 10.0])
def test_homogeneous_closed_forms(cfg, delta):
    p = make_p0(32, c1=1.0)
    erg = solve_ergodic(p, "newton", cfg)
    assert erg.lam == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(erg.u_bar.values)) <= 1e-12
    st_ = solve_discounted_stationary(p, delta, cfg)
    assert_allclose(st_.u_bar.values, 1.0 / delta, rtol=1e-12)
    assert_allclose(st_.m_bar.values, 1.0, atol=1e-12)
    th = solve_theta(p, erg, cfg)
    assert abs(th.theta) <= 1e-12


def test_ergodic_triple_is_normalized_and_positive(cfg, p1_small):
    erg = solve_ergodic(p1_small, "newton", cfg)
    g = p1_small.grid
    assert abs(g.cell_volume * erg.u_bar.values.sum()) <= 1e-12
    assert abs(g.cell_volume * erg.m_bar.values.sum() - 1.0) <= 1e-12
    assert erg.m_bar.values.min() > 0
    assert max(erg.residual_hjb, erg.residual_fp) <= 1e-9


def test_newton_and_longtime_agree(cfg, p1_small):
    a = solve_ergodic(p1_small, "newton", cfg)
    b = solve_ergodic(p1_small, "longtime", cfg.with_(longtime_T=20.0))
    assert b.method == "longtime"
    assert abs(a.lam - b.lam) <= 1e-6


def test_stationary_start_stays_stationary(cfg, p1_small):
    erg = solve_ergodic(p1_small, "newton", cfg)
    p = p1_small.replace(m0=erg.m_bar)
    terminal = erg.u_bar
    sol = solve_finite_horizon(p, 2.0, cfg, m_guess=erg.m_bar, terminal=terminal, shift=erg.lam)
    assert np.max(np.abs(sol.m_path.frames - erg.m_bar.values)) <= 1e-9
    assert np.max(np.abs(sol.u_path.frames - erg.u_bar.values)) <= 1e-9


@pytest.mark.parametrize("delta", [10.0, 1e4])
def test_discounted_large_delta_scale(cfg, p1_small, delta):
    st_ = solve_discounted_stationary(p1_small, delta, cfg)
    F = p1_small.f0_values + st_.m_bar.values
    H = __import__("mfglab").numerical_hamiltonian(p1_small, st_.u_bar.values).H
    # integrating the equation: delta * mean(u) = mean(F) - mean(H)
    assert delta * st_.u_bar.values.mean() == pytest.approx(F.mean() - H.mean(), abs=1e-10)
    if delta >= 1e3:
        # diffusion is negligible against the discount: u ~ F / delta
        assert np.max(np.abs(delta * st_.u_bar.values - F)) <= 0.01 * np.max(np.abs(F))


def test_theta_identity(cfg, p1_small):
    erg = solve_ergodic(p1_small, "newton", cfg)
    th = solve_theta(p1_small, erg, cfg)
    assert th.residual <= 1e-10
    assert theta_identity(p1_small, erg, th) == pytest.approx(th.theta, abs=1e-12)
    assert abs(p1_small.grid.cell_volume * th.rho.values.sum()) <= 1e-12


def test_picard_failure_carries_history_and_partial(p1_small):
    with pytest.raises(ConvergenceError) as info:
        solve_finite_horizon(p1_small, 1.0, SolverConfig(max_iters=2))
    assert len(info.value.history) == 2
    assert info.value.partial is not None


def test_fictitious_play_reaches_same_solution(cfg, p1_small):
    a = solve_finite_horizon(p1_small, 1.0, cfg)
    # 1/k averaging converges sublinearly, so a looser stopping level
    b = solve_finite_horizon(p1_small, 1.0, cfg.with_(fictitious_play=True, tol=1e-6))
    assert np.max(np.abs(a.m_path.frames - b.m_path.frames)) <= 1e-5


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), bump=st.floats(0.0, 2.0))
def test_comparison_principle(seed, bump):
    # F <= F' pointwise gives u <= u' for the discrete HJB solve
    g = build_grid(32)
    rng = np.random.default_rng(seed)
    tg = TimeGrid(0.5, 25)
    m = PathField(tg, g, rng.uniform(0.5, 1.5, (tg.Nt + 1, g.n)))
    lo = make_p1(32).replace(terminal=TerminalSpec(mode("cos", 1, 0.3)))
    hi = lo.replace(coupling=CouplingSpec(
        f0=mode("sin", 1, 0.5) + parse_expr(
            {"kind": "gauss", "center": 0.3, "width": 0.1, "amp": bump}),
        c1=1.0))
    u_lo = hjb_backward_path(lo, m, tg)
    u_hi = hjb_backward_path(hi, m, tg)
    assert np.all(u_lo.frames <= u_hi.frames + 1e-13)


def test_infinite_horizon_tail_is_flat(cfg, p1_small):
    erg = solve_ergodic(p1_small, "newton", cfg)
    inf = solve_infinite_horizon(p1_small, 1.0, erg, cfg)
    assert inf.tail_flat
    assert abs(inf.c_bar) <= 1e-3


def test_discounted_evolution_relaxes(cfg):
    p = make_p0(32, c1=1.0)
    p = p.replace(m0=Field(p.grid, 1.0 + 0.3 * np.cos(2 * np.pi * p.grid.axis)))
    evo = solve_discounted_evolution(p, 0.1, 0.5, cfg.with_(dt=1e-3))
    assert evo.fit is not None
    # linearization around the uniform state decays at least like the heat
    # mode; the margin covers the time discretization, log(1 + w dt) / dt
    assert evo.fit.rate >= 4 * np.pi**2 * 0.95
    assert np.max(np.abs(evo.m_path.frames[-1] - 1.0)) <= 1e-8


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(damping=0.0)
    with pytest.raises(ValueError):
        SolverConfig(time_scheme="rk4")
    with pytest.raises(ValueError):
        solve_discounted_stationary(make_p0(16), 0.0)
