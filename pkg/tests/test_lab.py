import numpy as np
import pytest

from conftest import make_p0, make_p1
from mfglab import (
    StudyReport,
    commutation_check,
    duality_gap,
    grid_convergence_study,
    horizon_limit_study,
    lemma_decay_suite,
    multiplicity_probe,
    solve_ergodic,
    solve_finite_horizon,
    solve_theta,
    turnpike_report,
    turnpike_solve,
    vanishing_discount_study,
)
from mfglab.lab import random_density


@pytest.fixture(scope="module")
def erg_small(cfg, p1_small):
    return solve_ergodic(p1_small, "newton", cfg)


def test_turnpike_report_on_trivial_problem_is_degenerate(cfg):
    p = make_p0(32)
    erg = solve_ergodic(p, "newton", cfg)
    rep = turnpike_report(solve_finite_horizon(p, 2.0, cfg), erg)
    assert rep.degenerate and rep.omega is None


def test_turnpike_report_fits_both_layers(cfg, p1_small, erg_small):
    rep = turnpike_report(turnpike_solve(p1_small, 4.0, erg_small, cfg), erg_small)
    assert not rep.degenerate
    assert rep.omega is not None and rep.omega > 0
    assert rep.residual <= 0.25
    assert rep.M_left > 0 and rep.M_right > 0
    series = rep.series()
    assert set(series) == {"t", "d", "model_d"}


def test_turnpike_explicit_window(cfg, p1_small, erg_small):
    sol = turnpike_solve(p1_small, 4.0, erg_small, cfg)
    rep = turnpike_report(sol, erg_small, (0.0, 1.0))
    assert rep.window == (0.0, 4.0)


def test_horizon_study_columns(cfg, p1_small, erg_small):
    rep = horizon_limit_study(p1_small, [2.0, 4.0, 8.0], 0.5, cfg, erg=erg_small)
    assert list(rep.columns) == ["delta_u", "delta_m", "ratio", "K"]
    assert rep.verdicts["bounded"]
    K = rep.column("K")
    assert np.all(K < 1.0)
    with pytest.raises(ValueError):
        horizon_limit_study(p1_small, [4.0, 2.0], 0.5, cfg)
    with pytest.raises(ValueError):
        horizon_limit_study(p1_small, [2.0, 4.0], 1.5, cfg)


def test_vanishing_discount_homogeneous_is_exact(cfg):
    rep = vanishing_discount_study(make_p0(32, c1=1.0), [0.2, 0.1, 0.05], cfg, evolution=False)
    assert np.all(rep.column("e_delta") <= 1e-9)
    assert rep.passed and rep.summary["exact"]


def test_vanishing_discount_negative_control(cfg, p1_small, erg_small):
    good = vanishing_discount_study(p1_small, [0.2, 0.1, 0.05], cfg, erg=erg_small,
                                    evolution=False)
    bad = vanishing_discount_study(p1_small, [0.2, 0.1, 0.05], cfg, erg=erg_small,
                                   evolution=False, theta_offset=0.1)
    assert good.passed
    assert not bad.verdicts["ratio"]
    assert bad.columns["verdict"][1:] == ["fail", "fail"]


def test_commutation_small(cfg, p1_small, erg_small):
    th = solve_theta(p1_small, erg_small, cfg)
    rep = commutation_check(p1_small, erg_small, th, cfg)
    assert rep.passed, rep.summary
    assert rep.summary["anchor"] == pytest.approx(th.theta, abs=1e-6)


def test_duality_gap_is_symmetric_and_vanishes_on_identical_runs(cfg, p1_small):
    a = solve_finite_horizon(p1_small, 1.0, cfg)
    b = solve_finite_horizon(p1_small, 1.0, cfg, m_guess=random_density(p1_small.grid, 4))
    conv_ab, anti_ab = duality_gap(a, b, p1_small)
    conv_ba, anti_ba = duality_gap(b, a, p1_small)
    assert conv_ab == pytest.approx(conv_ba) and anti_ab == pytest.approx(anti_ba)
    assert conv_ab <= 1e-12
    assert duality_gap(a, a, p1_small) == (0.0, 0.0)


def test_multiplicity_monotone_single_cluster(cfg, p1_small):
    rep = multiplicity_probe(p1_small, 1.0, [0, 1, 2], cfg, threshold=1e-6)
    assert rep.summary["clusters"] == 1
    assert rep.summary["nonconverged"] == 0
    assert rep.summary["margin"] == 0.0


def test_random_density_is_positive_unit_mass(p1_small):
    for seed in range(5):
        m = random_density(p1_small.grid, seed)
        assert m.values.min() > 0
        assert p1_small.grid.cell_volume * m.values.sum() == pytest.approx(1.0, abs=1e-14)


def test_lemma_suite():
    reports = lemma_decay_suite()
    assert all(r.passed for r in reports)
    heat = [r for r in reports if r.case in ("hj-heat", "fp-heat")]
    for r in heat:
        assert r.constants["nu"] == pytest.approx(4 * np.pi**2, rel=0.02)
    kinds = {r.lemma for r in reports}
    assert {"hj-decay", "fp-decay", "fp-weighted-energy", "fp-lp-drift-energy"} <= kinds


def test_grid_convergence_small(cfg):
    rep = grid_convergence_study(make_p1, [16, 32, 64], cfg)
    assert rep.passed
    with pytest.raises(ValueError):
        grid_convergence_study(make_p1, [16, 40], cfg)


def test_study_report_round_trip():
    rep = StudyReport("x", "T", [1.0, 2.0], columns={"a": [1.0, float("nan")]},
                      verdicts={"ok": True}, summary={"s": 1})
    back = StudyReport.from_dict(rep.to_dict())
    assert back.to_dict()["columns"]["a"][0] == 1.0
    assert back.passed
