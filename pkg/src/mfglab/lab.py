"""
Experiment drivers turning solver output into quantitative checks.

Every driver returns a report value (``TurnpikeReport``, ``StudyReport`` or
``LemmaReport``). Sweeps accept ``jobs`` to run independent rows in worker
processes; rows are always reported in parameter order, so the result does
not depend on scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import MFGLabError
from .expressions import Expr, constant, mode
from .fitting import ExpFit, InsufficientDataError, fit_exponential
from .grid import Field, Grid, VectorField, _bwd, _check_same_grid, _fwd, build_grid
from .kernels import (
    PathField,
    TimeGrid,
    fit_decay,
    linear_fp_forward,
    linear_parabolic_backward,
)
from .models import convexity_bounds, monotonicity_margin
from .problem import MFGProblem
from .solvers import (
    ErgodicSolution,
    FiniteHorizonSolution,
    SolverConfig,
    ThetaSolution,
    default_truncation,
    distance_profile,
    estimate_decay_rate,
    solve_discounted_evolution,
    solve_discounted_stationary,
    solve_ergodic,
    solve_finite_horizon,
    solve_infinite_horizon,
    solve_theta,
)

__all__ = [
    "TurnpikeReport",
    "StudyReport",
    "LemmaReport",
    "LemmaCase",
    "turnpike_solve",
    "turnpike_report",
    "horizon_limit_study",
    "vanishing_discount_study",
    "commutation_check",
    "duality_gap",
    "multiplicity_probe",
    "lemma_decay_suite",
    "grid_convergence_study",
    "default_lemma_cases",
    "random_density",
    "fit_exponential",
]

NOISE_FLOOR = 1e-13
RATIO_LIMIT = 0.7
CLUSTER_THRESHOLD = 1e-3


# -- report types ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TurnpikeReport:
    """Distance to the stationary state and its two-sided exponential fit.

    ``omega`` is ``None`` when the profile is degenerate or the fit residual
    exceeds ``residual_threshold``; ``omega_raw`` keeps the fitted value.
    """

    T: float
    times: np.ndarray
    distance: np.ndarray
    model_distance: np.ndarray
    M: Optional[float]
    omega: Optional[float]
    omega_raw: Optional[float]
    residual: Optional[float]
    window: tuple
    floor: float
    n_points: int
    degenerate: bool
    fit_model: str
    M_left: Optional[float] = None
    M_right: Optional[float] = None
    message: str = ""

    def series(self) -> dict:
        return {"t": self.times, "d": self.distance, "model_d": self.model_distance}

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items()
               if k not in ("times", "distance", "model_distance")}
        out["window"] = list(self.window)
        out.update({k: list(map(float, v)) for k, v in self.series().items()})
        return out

    @classmethod
    def from_dict(cls, data: dict) -> TurnpikeReport:
        data = dict(data)
        arrays = {"times": data.pop("t"), "distance": data.pop("d"),
                  "model_distance": data.pop("model_d")}
        data["window"] = tuple(data["window"])
        return cls(**{k: np.asarray(v, dtype=float) for k, v in arrays.items()}, **data)


@dataclass(eq=False)
class StudyReport:
    """One metric row per parameter value, plus verdicts and diagnostics."""

    name: str
    parameter: str
    values: list
    columns: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    row_errors: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.verdicts) and all(self.verdicts.values())

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=float)

    def series(self) -> dict:
        return {self.parameter: list(self.values), **self.columns}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "parameter": self.parameter,
            "values": list(self.values),
            "columns": {k: list(v) for k, v in self.columns.items()},
            "verdicts": dict(self.verdicts),
            "summary": dict(self.summary),
            "diagnostics": list(self.diagnostics),
            "row_errors": {str(k): v for k, v in self.row_errors.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> StudyReport:
        return cls(**data)


@dataclass(frozen=True)
class LemmaReport:
    lemma: str
    case: str
    constants: dict
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


# -- helpers -----------------------------------------------------------------


def _map_rows(fn: Callable, items: Sequence, jobs: int) -> list:
    """Apply ``fn`` to every item, optionally in worker processes, in order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def _ratios(values: Sequence[float]) -> list:
    out = [float("nan")]
    for prev, cur in zip(values[:-1], values[1:]):
        out.append(cur / prev if prev > 0 else float("nan"))
    return out


def random_density(grid: Grid, seed: int, modes: int = 3, spread: float = 0.9) -> Field:
    """Smooth positive unit-mass density from a seeded Fourier sum."""
    rng = np.random.default_rng(seed)
    coords = grid.coordinates()
    values = np.ones(grid.shape)
    amps = rng.uniform(0.2, 1.0, modes)
    amps *= spread / amps.sum()
    for a in amps:
        k = rng.integers(1, 4, size=grid.d)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        values = values + a * np.cos(2 * np.pi * sum(ki * x for ki, x in zip(k, coords)) + phase)
    values /= grid.cell_volume * values.sum()
    return Field(grid, values)


def turnpike_solve(
    problem: MFGProblem,
    T: float,
    erg: ErgodicSolution,
    cfg: SolverConfig | None = None,
    **kwargs,
) -> FiniteHorizonSolution:
    """Finite-horizon solve in the variable ``u - lambda_bar (T - t)``.

    The Picard iteration starts from ``m_bar`` at every interior frame, so
    the middle of the cylinder is resolved to round-off rather than to the
    Picard tolerance. ``kwargs`` are forwarded to ``solve_finite_horizon``.
    """
    kwargs.setdefault("m_guess", erg.m_bar)
    kwargs.setdefault("shift", erg.lam)
    return solve_finite_horizon(problem, T, cfg, **kwargs)


# -- turnpike ----------------------------------------------------------------


def turnpike_report(
    sol: FiniteHorizonSolution,
    erg: ErgodicSolution,
    fit_window: Optional[tuple] = None,
    *,
    model: str = "two_sided_free",
    residual_threshold: float = 0.25,
) -> TurnpikeReport:
    """Fit ``d(t) = ||m(t) - m_bar||_sup + ||Du(t) - Du_bar||_sup``.

    Args:
        sol: finite-horizon solution (shifted or not).
        erg: stationary triple on the same grid.
        fit_window: fractions ``(a, b)`` of ``T``. By default the boundary
            exclusion is ``0.05 T``, shrunk to a tenth of the time the
            profile needs to reach the noise floor when that is shorter
            (strongly diffusive problems reach round-off well inside
            ``0.05 T``).
        model: ``"two_sided_free"`` (separate prefactors at ``t = 0`` and
            ``t = T``) or ``"two_sided"`` (one shared prefactor).
        residual_threshold: largest RMS log residual for which ``omega`` is
            reported.
    """
    grid = sol.grid
    _check_same_grid(grid, erg.u_bar.grid)
    T = sol.time_grid.T
    t = sol.u_path.times
    d = distance_profile(sol.u_path.frames, sol.m_path.frames,
                         erg.u_bar.values, erg.m_bar.values, grid)
    mid = d[(t >= T / 3) & (t <= 2 * T / 3)]
    floor = max(NOISE_FLOOR, 10.0 * float(np.median(mid))) if mid.size else NOISE_FLOOR

    if fit_window is not None:
        lo, hi = fit_window[0] * T, fit_window[1] * T
    else:
        below = np.nonzero((d <= floor) & (t <= T / 2))[0]
        t_sig = t[below[0]] if below.size else T / 2
        tau = min(0.05 * T, 0.1 * t_sig)
        lo, hi = tau, T - tau
    win = (t >= lo - 1e-12) & (t <= hi + 1e-12)

    def degenerate(msg):
        return TurnpikeReport(T, t, d, np.full_like(d, np.nan), None, None, None, None,
                              (float(lo), float(hi)), floor, 0, True, model, message=msg)

    if float(np.max(d)) <= NOISE_FLOOR:
        return degenerate("degenerate: already stationary")
    try:
        fit = fit_exponential(t[win], d[win], model, T=T, floor=floor)
    except InsufficientDataError as exc:
        return degenerate(f"degenerate: {exc}")
    ok = fit.rate > 0 and fit.residual <= residual_threshold
    return TurnpikeReport(
        T, t, d, fit.predict(t), fit.M, fit.rate if ok else None, fit.rate,
        fit.residual, (lo, hi), floor, fit.n_points, False, model,
        fit.M_left, fit.M_right,
        "" if ok else f"fit residual {fit.residual:.3g} above threshold",
    )


# -- horizon limit -----------------------------------------------------------


def _horizon_row(args):
    problem, T, t_probe, cfg, erg = args
    sol = turnpike_solve(problem, T, erg, cfg)
    tg = sol.time_grid
    i = int(round(t_probe / tg.dt))
    return {
        "v_probe": sol.u_path.frames[i].copy(),
        "m_probe": sol.m_path.frames[i].copy(),
        "K": float(np.max(np.abs(sol.u_path.frames))),
        "iterations": sol.iterations,
    }


def horizon_limit_study(
    problem: MFGProblem,
    T_list: Sequence[float],
    t_probe: float,
    cfg: SolverConfig | None = None,
    *,
    erg: ErgodicSolution | None = None,
    jobs: int = 1,
) -> StudyReport:
    """Cauchy behavior of ``u^T(t_probe) - lambda_bar (T - t_probe)`` in ``T``.

    Row ``i`` reports ``Delta(T_{i-1}, T_i)`` for ``u`` and ``m`` at
    ``t_probe``, its ratio to the previous row, and
    ``K_T = ||u^T - lambda_bar (T - t)||_sup`` over the whole cylinder.
    """
    T_list = [float(T) for T in T_list]
    if any(b <= a for a, b in zip(T_list[:-1], T_list[1:])):
        raise ValueError("T_list must be increasing")
    if not t_probe < min(T_list) / 2:
        raise ValueError("t_probe must be below min(T_list) / 2")
    cfg = cfg or SolverConfig()
    erg = erg or solve_ergodic(problem, "newton", cfg)

    rows = []
    errors = {}
    results = _map_rows(_safe(_horizon_row), [(problem, T, t_probe, cfg, erg) for T in T_list], jobs)
    for T, res in zip(T_list, results):
        if isinstance(res, str):
            errors[T] = res
        rows.append(res)

    du, dm, K = [], [], []
    for i, res in enumerate(rows):
        K.append(res["K"] if isinstance(res, dict) else float("nan"))
        if i == 0:
            du.append(float("nan"))
            dm.append(float("nan"))
            continue
        prev = rows[i - 1]
        if isinstance(res, dict) and isinstance(prev, dict):
            du.append(float(np.max(np.abs(res["v_probe"] - prev["v_probe"]))))
            dm.append(float(np.max(np.abs(res["m_probe"] - prev["m_probe"]))))
        else:
            du.append(float("nan"))
            dm.append(float("nan"))
    ratio = _ratios(du[1:])
    ratio = [float("nan")] + ratio
    report = StudyReport(
        "horizon-limit", "T", T_list,
        columns={"delta_u": du, "delta_m": dm, "ratio": ratio, "K": K},
        row_errors=errors,
    )
    valid = [r for r in ratio[2:] if np.isfinite(r)]
    report.verdicts["geometric"] = bool(valid) and all(r <= RATIO_LIMIT for r in valid) and not errors
    finite_K = [k for k in K if np.isfinite(k)]
    report.verdicts["bounded"] = bool(finite_K) and max(finite_K) <= 2.0 * finite_K[0] + 1e-12
    report.summary = {"lambda_bar": erg.lam, "t_probe": t_probe,
                      "K_max": max(finite_K) if finite_K else float("nan")}
    floor = 1e3 * np.finfo(float).eps * max(1.0, max(finite_K, default=1.0))
    if any(np.isfinite(x) and x <= floor for x in du[1:]):
        report.diagnostics.append(
            f"some Delta values are at the floating-point floor ({floor:.1e}); "
            "their ratios reflect round-off"
        )
    return report


def _safe(fn):
    return _Guarded(fn)


class _Guarded:
    """Picklable wrapper turning solver failures into row error strings."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, args):
        try:
            return self.fn(args)
        except MFGLabError as exc:
            return f"{type(exc).__name__}: {exc}"


# -- vanishing discount ------------------------------------------------------


def _discount_row(args):
    problem, delta, cfg = args
    return solve_discounted_stationary(problem, delta, cfg)


def vanishing_discount_study(
    problem: MFGProblem,
    delta_list: Sequence[float],
    cfg: SolverConfig | None = None,
    *,
    erg: ErgodicSolution | None = None,
    theta: ThetaSolution | None = None,
    theta_offset: float = 0.0,
    evolution: bool = True,
    t_probe: float | None = None,
    T_trunc: float | None = None,
    jobs: int = 1,
) -> StudyReport:
    """Convergence of ``u_delta - lambda_bar / delta`` to ``u_bar + theta``.

    Columns: ``e_delta = ||u_delta - lambda_bar/delta - u_bar - theta||_sup``
    and its successive ratios. With ``evolution=True`` each row also solves
    the discounted evolution and reports
    ``||(u_delta(t_probe) - lambda_bar/delta) - v(t_probe)||_sup`` against the
    infinite-horizon ``v`` anchored at ``u_bar + theta``.

    ``theta_offset`` perturbs theta (negative control).
    """
    deltas = [float(x) for x in delta_list]
    if any(x <= 0 for x in deltas) or any(b >= a for a, b in zip(deltas[:-1], deltas[1:])):
        raise ValueError("delta_list must be positive and decreasing")
    cfg = cfg or SolverConfig()
    erg = erg or solve_ergodic(problem, "newton", cfg)
    theta = theta or solve_theta(problem, erg, cfg)
    th = theta.theta + theta_offset
    target = erg.u_bar.values + th

    results = _map_rows(_safe(_discount_row), [(problem, d, cfg) for d in deltas], jobs)
    errors = {}
    e = []
    for d, res in zip(deltas, results):
        if isinstance(res, str):
            errors[d] = res
            e.append(float("nan"))
        else:
            e.append(float(np.max(np.abs(res.u_bar.values - erg.lam / d - target))))
    report = StudyReport(
        "vanishing-discount", "delta", deltas,
        columns={"e_delta": e, "ratio": _ratios(e)}, row_errors=errors,
    )

    scale = 1.0 + float(np.max(np.abs(erg.u_bar.values))) + abs(erg.lam) / deltas[-1]
    finite = [x for x in e if np.isfinite(x)]
    exact = bool(finite) and all(x <= 1e-9 for x in finite)
    ratios = report.columns["ratio"][1:]
    report.verdicts["decreasing"] = not errors and (
        exact or all(b < a for a, b in zip(e[:-1], e[1:]))
    )
    report.verdicts["ratio"] = not errors and (
        exact or all(np.isfinite(r) and r <= RATIO_LIMIT for r in ratios)
    )
    verdict = []
    for i, x in enumerate(e):
        if not np.isfinite(x):
            verdict.append("error")
        elif exact or i == 0 or not np.isfinite(e[i - 1]):
            verdict.append("pass")
        else:
            ok = e[i] < e[i - 1] and ratios[i - 1] <= RATIO_LIMIT
            verdict.append("pass" if ok else "fail")
    report.columns["verdict"] = verdict
    report.summary = {"lambda_bar": erg.lam, "theta": theta.theta,
                      "theta_used": th, "exact": exact, "scale": scale}

    if evolution:
        omega = None
        if T_trunc is None:
            omega = estimate_decay_rate(problem, erg, cfg)
            T_trunc = default_truncation(omega)
        t_probe = 0.5 * T_trunc if t_probe is None else t_probe
        inf = solve_infinite_horizon(problem, T_trunc, erg, cfg, anchor=th)
        i = int(round(t_probe / inf.v_path.time_grid.dt))
        v_probe = inf.v_path.frames[i]
        gaps = []
        for d, res in zip(deltas, results):
            if isinstance(res, str):
                gaps.append(float("nan"))
                continue
            try:
                evo = solve_discounted_evolution(problem, d, T_trunc, cfg, stationary=res)
                gaps.append(float(np.max(np.abs(evo.u_path.frames[i] - erg.lam / d - v_probe))))
            except MFGLabError as exc:
                errors[d] = f"{type(exc).__name__}: {exc}"
                gaps.append(float("nan"))
        report.columns["evolution_gap"] = gaps
        report.summary.update({"T_trunc": T_trunc, "t_probe": t_probe})
    return report


# -- grid convergence --------------------------------------------------------


def grid_convergence_study(
    build: Callable[[int], MFGProblem],
    ns: Sequence[int] = (64, 128, 256),
    cfg: SolverConfig | None = None,
    *,
    min_ratio: float = 1.8,
) -> StudyReport:
    """Cross-grid sup-distance of ``m_bar`` under halving of ``h``.

    ``build(n)`` returns the problem on ``n`` nodes per axis. Consecutive grids must
    nest (``n`` doubles), so the coarse nodes are every other fine node.
    Row ``i`` holds the distance between grids ``i - 1`` and ``i`` and the
    ratio of the previous distance to it.
    """
    ns = [int(n) for n in ns]
    if any(b != 2 * a for a, b in zip(ns[:-1], ns[1:])):
        raise ValueError("ns must double at every step")
    cfg = cfg or SolverConfig()
    ms = [solve_ergodic(build(n), "newton", cfg).m_bar.values for n in ns]
    dist = [float("nan")]
    for coarse, fine in zip(ms[:-1], ms[1:]):
        sl = (slice(None, None, 2),) * coarse.ndim
        dist.append(float(np.max(np.abs(coarse - fine[sl]))))
    reduction = [float("nan")] + [a / b if b > 0 else float("inf")
                                  for a, b in zip(dist[:-1], dist[1:])]
    reduction[1] = float("nan")
    report = StudyReport("grid-convergence", "n", ns,
                         columns={"distance": dist, "reduction": reduction})
    valid = [r for r in reduction if not np.isnan(r)]
    report.verdicts["refinement"] = bool(valid) and all(r >= min_ratio for r in valid)
    return report


# -- commutation -------------------------------------------------------------


def commutation_check(
    problem: MFGProblem,
    erg: ErgodicSolution,
    theta_sol: ThetaSolution,
    cfg: SolverConfig | None = None,
    *,
    deltas: Sequence[float] = (0.1, 0.05, 0.025),
    T_trunc: float | None = None,
    tol: float = 1e-3,
) -> StudyReport:
    """Compare the ``t -> infinity`` and ``delta -> 0`` limits.

    For each ``delta`` the discounted evolution gives the tail constant
    ``c(delta) = integrate(u_delta(t_tail) - lambda_bar/delta)``. Quadratic
    extrapolation of ``c`` to ``delta = 0`` fixes the anchor of the
    infinite-horizon problem, whose tails are then compared with
    ``u_bar + theta`` and ``m_bar`` at ``t_tail = 0.9 T_trunc``.
    """
    cfg = cfg or SolverConfig()
    deltas = [float(x) for x in deltas]
    if T_trunc is None:
        T_trunc = default_truncation(estimate_decay_rate(problem, erg, cfg))
    grid = problem.grid
    c, path_gap, evos = [], [], []
    for d in deltas:
        evo = solve_discounted_evolution(problem, d, T_trunc, cfg)
        tg = evo.u_path.time_grid
        i_tail = int(round(0.9 * tg.Nt))
        c.append(grid.cell_volume * float(np.sum(evo.u_path.frames[i_tail])) - erg.lam / d)
        evos.append(evo)
    coeffs = np.polyfit(np.array(deltas), np.array(c), len(deltas) - 1)
    anchor = float(coeffs[-1])

    inf = solve_infinite_horizon(problem, T_trunc, erg, cfg, anchor=anchor)
    tg = inf.v_path.time_grid
    i_tail = int(round(0.9 * tg.Nt))
    v_tail = inf.v_path.frames[i_tail]
    mu_tail = inf.mu_path.frames[i_tail]
    v_err = float(np.max(np.abs(v_tail - erg.u_bar.values - theta_sol.theta)))
    mu_err = float(np.max(np.abs(mu_tail - erg.m_bar.values)))
    for d, evo in zip(deltas, evos):
        path_gap.append(float(np.max(np.abs(evo.u_path.frames - erg.lam / d - inf.v_path.frames))))

    report = StudyReport(
        "commutation", "delta", deltas,
        columns={"tail_constant": c, "path_gap": path_gap},
    )
    report.summary = {
        "T_trunc": T_trunc,
        "t_tail": float(tg.times[i_tail]),
        "anchor": anchor,
        "theta": theta_sol.theta,
        "v_tail_error": v_err,
        "mu_tail_error": mu_err,
        "tail_jump": inf.tail_jump,
        "c_bar": inf.c_bar,
    }
    report.verdicts = {
        "v_tail": v_err <= tol,
        "mu_tail": mu_err <= tol,
        "tail_flat": inf.tail_flat,
    }
    if not inf.tail_flat:
        report.diagnostics.append(
            f"tail not flat (jump {inf.tail_jump:.2e}); T_trunc={T_trunc:.3g} is too short"
        )
    return report


# -- duality and multiplicity ------------------------------------------------


def _grad_sq(w: np.ndarray, grid: Grid) -> np.ndarray:
    """``|Dw|^2`` per frame as the mean of forward and backward squares."""
    out = np.zeros_like(w)
    for ax in range(1, grid.d + 1):
        out += 0.5 * (_fwd(w, grid.h, ax) ** 2 + _bwd(w, grid.h, ax) ** 2)
    return out


def duality_gap(
    solA: FiniteHorizonSolution,
    solB: FiniteHorizonSolution,
    problem: MFGProblem,
    *,
    gamma: float | None = None,
) -> tuple[float, float]:
    """``(convexity_term, antimono_term)`` of the uniqueness duality estimate.

    ``convexity_term = alpha_U int int (m_A + m_B) |Du_A - Du_B|^2`` with
    ``alpha_U`` the convexity constant on ``|p| <= U`` (``U`` the larger
    gradient bound of the two runs); ``antimono_term = gamma int int
    (m_A - m_B)^2 + gamma int (m_A(T) - m_B(T))^2`` with ``gamma`` the
    monotonicity margin on ``[0, max sup m]`` unless given. Time integrals
    use the trapezoid rule over the frames.
    """
    grid = problem.grid
    _check_same_grid(solA.grid, solB.grid)
    if solA.time_grid != solB.time_grid:
        raise ValueError("solutions live on different time grids")
    tg = solA.time_grid
    vol = grid.cell_volume
    axes = tuple(range(1, grid.d + 1))
    U = max(solA.sup_du, solB.sup_du)
    alpha = convexity_bounds(problem.hamiltonian, U)[1]
    if gamma is None:
        gamma = monotonicity_margin(problem.coupling, max(solA.sup_m, solB.sup_m, 1e-8))
    mA, mB = solA.m_path.frames, solB.m_path.frames
    w = solA.u_path.frames - solB.u_path.frames
    conv_t = vol * np.sum((mA + mB) * _grad_sq(w, grid), axis=axes)
    anti_t = vol * np.sum((mA - mB) ** 2, axis=axes)
    conv = alpha * float(np.trapezoid(conv_t, dx=tg.dt))
    anti = gamma * float(np.trapezoid(anti_t, dx=tg.dt)) + gamma * float(anti_t[-1])
    return conv, anti


def _probe_row(args):
    problem, T, seed_field, cfg = args
    return solve_finite_horizon(problem, T, cfg, m_guess=seed_field)


def multiplicity_probe(
    problem: MFGProblem,
    T: float,
    seeds: Sequence,
    cfg: SolverConfig | None = None,
    *,
    threshold: float = CLUSTER_THRESHOLD,
    jobs: int = 1,
) -> StudyReport:
    """Multi-start Picard runs clustered by pairwise sup-distance.

    Seeds are initial density guesses: :class:`Field` values, or integers
    turned into smooth random densities by :func:`random_density`. Two
    converged runs share a cluster when the sup-distance of their ``m`` and
    ``u`` paths is at most ``threshold`` (single linkage).
    """
    cfg = cfg or SolverConfig()
    fields = [s if isinstance(s, Field) else random_density(problem.grid, int(s)) for s in seeds]
    results = _map_rows(_safe(_probe_row), [(problem, T, f, cfg) for f in fields], jobs)
    labels = list(range(len(results)))
    converged = [not isinstance(r, str) for r in results]

    def find(i):
        while labels[i] != i:
            labels[i] = labels[labels[i]]
            i = labels[i]
        return i

    n = len(results)
    dist = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(i + 1, n):
            if converged[i] and converged[j]:
                a, b = results[i], results[j]
                dij = max(
                    float(np.max(np.abs(a.m_path.frames - b.m_path.frames))),
                    float(np.max(np.abs(a.u_path.frames - b.u_path.frames))),
                )
                dist[i, j] = dist[j, i] = dij
                if dij <= threshold:
                    labels[find(i)] = find(j)
    roots = [find(i) if converged[i] else -1 for i in range(n)]
    unique = sorted({r for r in roots if r >= 0})
    cluster = [unique.index(r) if r >= 0 else -1 for r in roots]
    margin = monotonicity_margin(problem.coupling, max(
        [r.sup_m for r in results if not isinstance(r, str)] + [float(np.max(problem.m0.values))]
    ))
    report = StudyReport(
        "multiplicity", "seed", [s if not isinstance(s, Field) else i for i, s in enumerate(seeds)],
        columns={
            "converged": [float(c) for c in converged],
            "iterations": [float(r.iterations) if not isinstance(r, str) else float("nan")
                           for r in results],
            "residual": [r.residual if not isinstance(r, str) else float("nan") for r in results],
            "cluster": [float(c) for c in cluster],
        },
        row_errors={i: r for i, r in enumerate(results) if isinstance(r, str)},
    )
    off = dist[np.triu_indices(n, 1)]
    off = off[np.isfinite(off)]
    report.summary = {
        "clusters": len(unique),
        "nonconverged": int(n - sum(converged)),
        "margin": margin,
        "max_pair_distance": float(off.max()) if off.size else 0.0,
        "threshold": threshold,
    }
    report.verdicts = {"single_cluster": len(unique) == 1 and all(converged)}
    return report


# -- lemma harness -----------------------------------------------------------


@dataclass(frozen=True)
class LemmaCase:
    """One linear experiment of the decay suite.

    ``kind`` is ``"hj"`` (backward decay), ``"fp"`` (forward decay),
    ``"weighted"`` (time-weighted bound with a flux) or ``"rho1"``
    (``L^1 L^{p'}`` bound of a nonnegative density). ``drift`` is an
    expression per axis, or ``None`` for zero drift.
    """

    kind: str
    name: str
    n: int = 128
    d: int = 1
    kappa: float = 1.0
    T: float = 0.05
    dt: float = 1e-4
    drift: Optional[tuple] = None
    data: Expr = field(default_factory=lambda: mode("cos", 1))
    flux_amp: float = 0.0
    seed: int = 0
    p_prime: float = 2.0


def _random_expr(rng, d: int, amp: float, modes: int = 3) -> Expr:
    terms = ()
    for _ in range(modes):
        k = tuple(int(x) for x in rng.integers(1, 4, size=d))
        kind = "sin" if rng.random() < 0.5 else "cos"
        terms += mode(kind, k, float(amp * rng.uniform(-1, 1) / modes)).terms
    return Expr(terms)


def default_lemma_cases() -> list:
    rng = np.random.default_rng(7)
    V_rand = (_random_expr(rng, 1, 3.0),)
    return [
        LemmaCase("hj", "hj-heat", n=256),
        LemmaCase("hj", "hj-constant-drift", n=256, drift=(constant(1.0),)),
        LemmaCase("fp", "fp-heat", n=256),
        LemmaCase("fp", "fp-random-drift", n=128, T=0.2, dt=1e-3, drift=V_rand),
        LemmaCase("weighted", "weighted-random", n=128, T=3.0, dt=1e-2, drift=V_rand,
                  flux_amp=0.1, seed=3),
        LemmaCase("rho1", "rho1-random", n=128, T=1.0, dt=1e-2, drift=V_rand,
                  data=constant(1.0) + mode("cos", 1, 0.5)),
    ]


def _drift_field(case: LemmaCase, grid: Grid) -> VectorField | None:
    if case.drift is None:
        return None
    return VectorField(grid, tuple(e.on(grid) for e in case.drift))


def _l2(values: np.ndarray, grid: Grid, axes) -> np.ndarray:
    return np.sqrt(grid.cell_volume * np.sum(values**2, axis=axes))


def _run_case(case: LemmaCase) -> list:
    grid = build_grid(case.n, case.d)
    tg = TimeGrid.from_step(case.T, case.dt)
    V = _drift_field(case, grid)
    data = case.data.on(grid)
    axes = tuple(range(1, grid.d + 1))
    reports = []
    if case.kind == "hj":
        path = linear_parabolic_backward(V, None, Field(grid, data), tg, case.kappa)
        rep = fit_decay(path, backward=True, subtract_mean=True)
        ok = rep.nu > 0 and rep.residual <= 0.1
        reports.append(LemmaReport("hj-decay", case.name,
                                   {"nu": rep.nu, "C": rep.C, "residual": rep.residual,
                                    "heat_rate": 4 * np.pi**2 * case.kappa}, ok))
        return reports

    rho0 = data - np.mean(data)
    if case.kind == "fp":
        path = linear_fp_forward(V, None, Field(grid, rho0), tg, case.kappa)
        norms = _l2(path.frames, grid, axes)
        fit = fit_exponential(path.times, norms, "one_sided")
        decreasing = bool(np.all(np.diff(norms[len(norms) // 10:]) <= 1e-15))
        ok = fit.rate > 0 and decreasing
        reports.append(LemmaReport("fp-decay", case.name,
                                   {"nu": fit.rate, "C": fit.M, "residual": fit.residual,
                                    "heat_rate": 4 * np.pi**2 * case.kappa}, ok,
                                   "L2 norm decreasing after transient" if decreasing else
                                   "L2 norm not monotone after transient"))
        return reports

    if case.kind == "weighted":
        rng = np.random.default_rng(case.seed)
        flux = VectorField(grid, tuple(_random_expr(rng, grid.d, case.flux_amp).on(grid)
                                       for _ in range(grid.d)))
        free = linear_fp_forward(V, None, Field(grid, rho0), tg, case.kappa)
        nu = fit_exponential(free.times, _l2(free.frames, grid, axes), "one_sided").rate
        path = linear_fp_forward(V, flux, Field(grid, rho0), tg, case.kappa)
        t = path.times
        sq = _l2(path.frames, grid, axes) ** 2
        F_sq = grid.cell_volume * sum(float(np.sum(c**2)) for c in flux.components)
        t0, t1 = 0.0, 1.0
        ratios = {}
        for delta in (0.0, 0.1):
            w = np.exp(-delta * t)
            sel = t >= t1
            lhs = float(np.trapezoid((w * sq)[sel], t[sel]))
            rhs = (math.exp(-delta * t1) * sq[0] * math.exp(-2 * nu * (t1 - t0))
                   + float(np.trapezoid(w * F_sq, t)))
            ratios[delta] = float(lhs / rhs)
        C = max(ratios.values())
        ok = all(np.isfinite(r) for r in ratios.values())
        reports.append(LemmaReport("fp-weighted-energy", case.name,
                                   {"nu": nu, "C": C, "ratio_delta_0": ratios[0.0],
                                    "ratio_delta_0.1": ratios[0.1]}, ok))
        return reports

    if case.kind == "rho1":
        m0 = data / (grid.cell_volume * data.sum())
        path = linear_fp_forward(V, None, Field(grid, m0), tg, case.kappa)
        p = case.p_prime
        Lp = (grid.cell_volume * np.sum(np.abs(path.frames) ** p, axis=axes)) ** (1 / p)
        lhs = float(np.trapezoid(Lp, path.times))
        V2 = sum(c**2 for c in V.components) if V is not None else 0.0
        energy = float(np.trapezoid(grid.cell_volume * np.sum(V2 * path.frames, axis=axes),
                                    path.times))
        mass = grid.cell_volume * float(np.sum(np.abs(m0)))
        consts = {"lhs": lhs, "drift_energy": energy, "mass": mass}
        ok = bool(np.min(path.frames) >= -1e-12)
        for eps in (0.1, 1.0):
            consts[f"C_eps_{eps}"] = max(0.0, lhs - eps * energy) / ((1 + 1 / eps) * mass)
        reports.append(LemmaReport("fp-lp-drift-energy", case.name, consts, ok))
        return reports
    raise ValueError(f"unknown lemma case kind {case.kind!r}")


def lemma_decay_suite(cases: Sequence[LemmaCase] | None = None, *, jobs: int = 1) -> list:
    """Run the linear decay experiments; returns one report per case."""
    cases = list(cases) if cases is not None else default_lemma_cases()
    out = _map_rows(_run_case, cases, jobs)
    return [r for group in out for r in group]
