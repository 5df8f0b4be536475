"""Acceptance criteria, run at their stated sizes and tolerances.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts. Run on its own with::

    pytest tests/test_acceptance.py -v
"""

import time

import numpy as np
import pytest

from conftest import make_p0, make_p1
from mfglab import (
    CouplingSpec,
    Field,
    TimeGrid,
    PathField,
    VectorField,
    adjointness_check,
    build_grid,
    fit_decay,
    fp_forward_path,
    grid_convergence_study,
    horizon_limit_study,
    linear_fp_forward,
    linear_parabolic_backward,
    mode,
    multiplicity_probe,
    resolve_config,
    run_plan,
    solve_ergodic,
    solve_finite_horizon,
    solve_theta,
    commutation_check,
    turnpike_report,
    turnpike_solve,
    vanishing_discount_study,
)

pytestmark = pytest.mark.slow

T_LIST = (10.0, 20.0, 40.0)
DELTAS = (0.2, 0.1, 0.05, 0.025)


@pytest.fixture(scope="module")
def p1():
    return make_p1(128)


@pytest.fixture(scope="module")
def erg(p1, cfg):
    return solve_ergodic(p1, "newton", cfg)


@pytest.fixture(scope="module")
def fp_paths():
    """Every density path produced in this module, for the conservation audit."""
    return []


@pytest.fixture(scope="module")
def turnpike_runs(p1, erg, cfg, fp_paths):
    runs = {}
    for T in T_LIST:
        t0 = time.perf_counter()
        sol = turnpike_solve(p1, T, erg, cfg)
        elapsed = time.perf_counter() - t0
        fp_paths.append((f"P1 T={T:g}", sol.m_path))
        runs[T] = (sol, turnpike_report(sol, erg), elapsed)
    return runs


def test_01_trivial_stationarity(criterion, cfg, fp_paths):
    p0 = make_p0(64)
    t0 = time.perf_counter()
    sol = solve_finite_horizon(p0, 1.0, cfg)
    elapsed = time.perf_counter() - t0
    fp_paths.append(("P0", sol.m_path))
    du = float(np.max(np.abs(sol.u_path.frames)))
    dm = float(np.max(np.abs(sol.m_path.frames - 1.0)))
    ok = du <= 1e-10 and dm <= 1e-10 and elapsed < 1.0
    criterion(1, ok, f"|u|={du:.1e} |m-1|={dm:.1e} runtime={elapsed:.3f}s")
    assert ok


def test_03_discrete_duality(criterion):
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        g = build_grid(128) if seed % 2 == 0 else build_grid(32, 2)
        amp = rng.uniform(0.5, 20.0)
        V = VectorField(g, tuple(amp * np.tanh(rng.standard_normal(g.shape)) for _ in range(g.d)))
        worst = max(worst, adjointness_check(V, trials=10, seed=seed))
    ok = worst <= 1e-12
    criterion(3, ok, f"worst relative defect={worst:.2e} over 10 drifts")
    assert ok


def test_04_heat_mode_oracles(criterion):
    kappa = 1.0
    g = build_grid(256)
    tg = TimeGrid.from_step(0.05, 1e-4)
    target = 4 * np.pi**2 * kappa
    mode1 = Field(g, np.cos(2 * np.pi * g.axis))
    back = fit_decay(linear_parabolic_backward(None, None, mode1, tg, kappa), backward=True)
    fwd = fit_decay(linear_fp_forward(None, None, mode1, tg, kappa))
    drift = VectorField(g, (np.ones(g.shape),))
    back_v = fit_decay(linear_parabolic_backward(drift, None, mode1, tg, kappa), backward=True)
    errs = [abs(r.nu - target) / target for r in (back, fwd, back_v)]
    ok = max(errs) <= 0.02
    criterion(4, ok, "nu/4pi^2k = " + ", ".join(f"{r.nu / target:.4f}" for r in (back, fwd, back_v)))
    assert ok


def test_05_turnpike(criterion, turnpike_runs):
    reps = {T: rep for T, (_, rep, _) in turnpike_runs.items()}
    times = {T: el for T, (_, _, el) in turnpike_runs.items()}
    omegas = {T: rep.omega for T, rep in reps.items()}
    ok = all(w is not None and w > 0 for w in omegas.values())
    spread = float("nan")
    if ok:
        spread = max(abs(omegas[T] - omegas[40.0]) / omegas[40.0] for T in T_LIST)
        ok = spread <= 0.15
    d = reps[40.0].distance
    half = d[len(d) // 2] / d[0]
    ok = ok and half <= 1e-3 and max(times.values()) < 120.0
    criterion(5, ok, "omega=" + ", ".join(f"{omegas[T]}" if omegas[T] is None else
                                          f"{omegas[T]:.3f}" for T in T_LIST)
              + f" spread={spread:.1e} d(T/2)/d(0)={half:.1e} "
              f"max solve={max(times.values()):.1f}s")
    assert ok


def test_06_mild_anti_monotonicity(criterion, p1, cfg, fp_paths):
    p = p1.replace(coupling=CouplingSpec(f0=mode("sin", 1, 0.5), gamma=0.05, alpha=1.0))
    probe = multiplicity_probe(p, 10.0, [0, 1, 2], cfg, threshold=1e-6)
    erg6 = solve_ergodic(p, "newton", cfg)
    sol = turnpike_solve(p, 10.0, erg6, cfg)
    fp_paths.append(("anti-monotone T=10", sol.m_path))
    rep = turnpike_report(sol, erg6)
    ok = (probe.summary["clusters"] == 1 and probe.summary["nonconverged"] == 0
          and probe.summary["max_pair_distance"] <= 1e-6
          and rep.omega is not None and rep.omega > 0)
    criterion(6, ok, f"clusters={probe.summary['clusters']} "
                     f"max pair distance={probe.summary['max_pair_distance']:.1e} "
                     f"margin={probe.summary['margin']:.3g} omega={rep.omega}")
    assert ok


def test_07_horizon_limit(criterion, p1, erg, cfg):
    rep = horizon_limit_study(p1, list(T_LIST), 2.0, cfg, erg=erg, jobs=3)
    du = rep.column("delta_u")
    ratio = du[2] / du[1]
    K = rep.column("K")
    ok = ratio <= 0.7 and rep.verdicts["bounded"]
    note = "; " + rep.diagnostics[0] if rep.diagnostics else ""
    criterion(7, ok, f"Delta(10,20)={du[1]:.2e} Delta(20,40)={du[2]:.2e} ratio={ratio:.3f} "
                     f"K={K.max():.4f}{note}")
    assert ok


def test_08_vanishing_discount(criterion, p1, erg, cfg):
    rep = vanishing_discount_study(p1, list(DELTAS), cfg, erg=erg)
    e = rep.column("e_delta")
    ratios = e[1:] / e[:-1]
    ok_p1 = bool(np.all(np.diff(e) < 0) and np.all(ratios <= 0.7))
    hom = vanishing_discount_study(make_p0(128, c1=1.0), list(DELTAS), cfg, evolution=False)
    e_hom = hom.column("e_delta")
    ok = ok_p1 and bool(np.all(e_hom <= 1e-9))
    criterion(8, ok, "e_delta=" + ", ".join(f"{x:.3e}" for x in e)
              + " ratios=" + ", ".join(f"{r:.3f}" for r in ratios)
              + f" homogeneous max={e_hom.max():.1e}")
    assert ok


def test_09_commutation(criterion, p1, erg, cfg):
    th = solve_theta(p1, erg, cfg)
    rep = commutation_check(p1, erg, th, cfg)
    v_err, mu_err = rep.summary["v_tail_error"], rep.summary["mu_tail_error"]
    ok = v_err <= 1e-3 and mu_err <= 1e-3
    criterion(9, ok, f"|v-u_bar-theta|={v_err:.1e} |mu-m_bar|={mu_err:.1e} "
                     f"T_trunc={rep.summary['T_trunc']:.3f}")
    assert ok


def test_10_ergodic_cross_validation(criterion, p1, erg, cfg):
    long = solve_ergodic(p1, "longtime", cfg)
    gap = abs(erg.lam - long.lam)
    hom = solve_ergodic(make_p0(128, c1=1.0), "newton", cfg)
    hom_err = abs(hom.lam - 1.0)
    ok = gap <= 1e-4 and hom_err <= 1e-10
    criterion(10, ok, f"|lam_newton-lam_longtime|={gap:.1e} |lam_hom-1|={hom_err:.1e}")
    assert ok


def test_11_grid_convergence(criterion, cfg):
    rep = grid_convergence_study(make_p1, (64, 128, 256), cfg)
    dist = rep.column("distance")
    factor = dist[1] / dist[2]
    ok = factor >= 1.8
    criterion(11, ok, f"d(64,128)={dist[1]:.2e} d(128,256)={dist[2]:.2e} factor={factor:.2f}")
    assert ok


def test_12_determinism(criterion, tmp_path):
    def plan(tag, action, params, jobs):
        return resolve_config({
            "schema_version": 1, "action": action, "seed": 12345, "jobs": jobs,
            "problem": {"grid": {"n": 32}, "coupling": {"c1": 1.0, "f0": {"kind": "sin", "k": 1,
                                                                        "amp": 0.5}}},
            "params": params, "output": {"dir": str(tmp_path / tag)},
        })

    same = True
    checked = 0
    for action, params in [("multiplicity", {"T": 1.0, "seeds": 3}),
                           ("vanishing-discount", {"delta_list": [0.2, 0.1]}),
                           ("turnpike", {"T": 2.0})]:
        a = run_plan(plan(f"{action}-a", action, params, 1))
        b = run_plan(plan(f"{action}-b", action, params, 2))
        for f in a.files:
            if f["path"].endswith(".csv"):
                checked += 1
                bytes_a = (tmp_path / f"{action}-a" / f["path"]).read_bytes()
                bytes_b = (tmp_path / f"{action}-b" / f["path"]).read_bytes()
                same = same and bytes_a == bytes_b
    ok = same and checked == 3
    criterion(12, ok, f"{checked} CSV payloads byte-identical across reruns: {same}")
    assert ok


def test_02_conservation_and_positivity(criterion, turnpike_runs, fp_paths, p1):
    # extra paths driven by rough random value functions
    tg = TimeGrid(1.0, 100)
    rng = np.random.default_rng(2)
    for k in range(3):
        u = rng.standard_normal((tg.Nt + 1, 128)).cumsum(axis=1) * 0.05
        m = fp_forward_path(p1, PathField(tg, p1.grid, u), tg)
        fp_paths.append((f"random drift {k}", m))
    worst_mass = max(float(np.max(np.abs(m.integrals() - 1.0))) for _, m in fp_paths)
    worst_min = min(float(m.frames.min()) for _, m in fp_paths)
    ok = worst_mass <= 1e-12 and worst_min >= -1e-12
    criterion(2, ok, f"{len(fp_paths)} paths: max |mass-1|={worst_mass:.1e} "
                     f"min m={worst_min:.3e}")
    assert ok


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(pytest.main([__file__, "-v"]))
