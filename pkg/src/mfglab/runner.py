"""Execute a resolved plan and write its run directory."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentPlan
from .errors import ConfigError, MFGLabError
from .io import render_csv, render_json, to_jsonable
from .lab import (
    commutation_check,
    horizon_limit_study,
    lemma_decay_suite,
    multiplicity_probe,
    turnpike_report,
    turnpike_solve,
    vanishing_discount_study,
)
from .solvers import (
    solve_discounted_stationary,
    solve_ergodic,
    solve_finite_horizon,
    solve_theta,
)

__all__ = ["RunManifest", "run_plan", "EXIT_OK", "EXIT_CONFIG", "EXIT_SOLVER", "EXIT_IO"]

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
MANIFEST_SCHEMA_VERSION = 1


@dataclass
class RunManifest:
    plan_hash: str
    version: str
    action: str
    seed: int
    exit_code: int = EXIT_OK
    errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "ok" if self.exit_code == EXIT_OK else "failed"

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "tool": "mfglab",
            "version": self.version,
            "plan_hash": self.plan_hash,
            "action": self.action,
            "seed": self.seed,
            "status": self.status,
            "exit_code": self.exit_code,
            "errors": self.errors,
            "timings": self.timings,
            "files": self.files,
            "summary": to_jsonable(self.summary),
        }


class _Outputs:
    """Rendered payloads, held in memory until the writer stage of ``run_plan``."""

    def __init__(self, fmt: str):
        self.fmt = fmt
        self.items: list[tuple[str, str]] = []

    def series(self, stem: str, report) -> None:
        if self.fmt == "csv":
            self.items.append((f"{stem}.csv", render_csv(report)))
        else:
            self.items.append((f"{stem}.json", render_json(report)))

    def report(self, stem: str, obj) -> None:
        text = json.dumps({"schema_version": 1, "data": to_jsonable(obj)},
                          indent=2, sort_keys=True) + "\n"
        self.items.append((f"{stem}.json", text))


def _grid_columns(grid) -> dict:
    coords = grid.coordinates()
    names = ("x", "y")[: grid.d]
    return {n: c.ravel() for n, c in zip(names, coords)}


def _seed_values(plan: ExperimentPlan) -> list:
    seeds = plan.params["seeds"]
    if isinstance(seeds, list):
        return seeds
    ss = np.random.SeedSequence(plan.seed)
    return [int(s.generate_state(1, np.uint32)[0]) for s in ss.spawn(seeds)]


def _run_action(plan: ExperimentPlan, out: _Outputs, summary: dict, errors: list) -> None:
    try:
        problem = plan.build_problem()
        cfg = plan.solver_config()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), field="problem") from exc
    p = plan.params
    act = plan.action
    grid = problem.grid

    if act == "solve-finite":
        shift = solve_ergodic(problem, "newton", cfg).lam if p["shift"] else 0.0
        sol = solve_finite_horizon(problem, p["T"], cfg, shift=shift)
        u, m = sol.u_path, sol.m_path
        out.series("profile", {
            "t": u.times, "int_u": u.integrals(), "mass": m.integrals(),
            "min_m": m.frames.reshape(len(m), -1).min(axis=1),
            "sup_m": m.sup_norms(),
        })
        out.series("frames", {**_grid_columns(grid),
                              "u_0": u.frames[0].ravel(), "m_0": m.frames[0].ravel(),
                              "u_T": u.frames[-1].ravel(), "m_T": m.frames[-1].ravel()})
        out.series("history", {"iteration": np.arange(1, len(sol.history) + 1),
                               "defect": list(sol.history)})
        summary.update(iterations=sol.iterations, residual=sol.residual,
                       hjb_residual=sol.hjb_residual, shift=shift)
    elif act == "solve-ergodic":
        erg = solve_ergodic(problem, p["method"], cfg)
        out.series("stationary", {**_grid_columns(grid), "u_bar": erg.u_bar.values.ravel(),
                                  "m_bar": erg.m_bar.values.ravel()})
        summary.update(lambda_bar=erg.lam, method=erg.method, iterations=erg.iterations,
                       residual_hjb=erg.residual_hjb, residual_fp=erg.residual_fp)
    elif act == "solve-discounted":
        st = solve_discounted_stationary(problem, p["delta"], cfg)
        out.series("stationary", {**_grid_columns(grid), "u_delta": st.u_bar.values.ravel(),
                                  "m_delta": st.m_bar.values.ravel()})
        summary.update(delta=st.delta, iterations=st.iterations,
                       residual_hjb=st.residual_hjb, residual_fp=st.residual_fp)
    elif act == "turnpike":
        erg = solve_ergodic(problem, "newton", cfg)
        sol = turnpike_solve(problem, p["T"], erg, cfg)
        rep = turnpike_report(sol, erg, tuple(p["fit_window"]) if p["fit_window"] else None,
                              model=p["model"])
        out.series("profile", rep)
        out.report("report", rep.to_dict())
        summary.update(lambda_bar=erg.lam, omega=rep.omega, M=rep.M, residual=rep.residual,
                       degenerate=rep.degenerate)
    elif act in ("horizon-limit", "vanishing-discount", "multiplicity"):
        if act == "horizon-limit":
            rep = horizon_limit_study(problem, p["T_list"], p["t_probe"], cfg, jobs=plan.jobs)
        elif act == "vanishing-discount":
            rep = vanishing_discount_study(problem, p["delta_list"], cfg,
                                           theta_offset=p["theta_offset"],
                                           evolution=p["evolution"], T_trunc=p["T_trunc"],
                                           jobs=plan.jobs)
        else:
            rep = multiplicity_probe(problem, p["T"], _seed_values(plan), cfg,
                                     threshold=p["threshold"], jobs=plan.jobs)
        out.series("study", rep)
        out.report("report", rep.to_dict())
        summary.update(verdicts=rep.verdicts, **rep.summary)
        errors.extend(f"row {k}: {v}" for k, v in rep.row_errors.items())
    elif act == "commutation":
        erg = solve_ergodic(problem, "newton", cfg)
        th = solve_theta(problem, erg, cfg)
        rep = commutation_check(problem, erg, th, cfg, deltas=p["deltas"],
                                T_trunc=p["T_trunc"], tol=p["tol"])
        out.series("study", rep)
        out.report("report", rep.to_dict())
        summary.update(verdicts=rep.verdicts, **rep.summary)
    elif act == "lemmas":
        reps = lemma_decay_suite(jobs=plan.jobs)
        out.series("lemmas", reps)
        out.report("report", [r.to_dict() for r in reps])
        summary.update(passed=all(r.passed for r in reps))
    else:  # pragma: no cover - resolve_config rejects unknown actions
        raise ConfigError(f"unknown action {act!r}", field="action")


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run_plan(plan: ExperimentPlan) -> RunManifest:
    """Run the plan, then write outputs, plan and manifest to ``plan.output['dir']``.

    Solver failures do not raise: they are recorded in the manifest with
    exit code 3, and everything computed before the failure (sweep rows in
    particular) is still written. Write failures raise ``OSError``.
    """
    manifest = RunManifest(plan.digest(), __version__, plan.action, plan.seed)
    out = _Outputs(plan.output["format"])
    summary: dict = {}
    errors: list = []
    t0 = time.perf_counter()
    try:
        _run_action(plan, out, summary, errors)
    except ConfigError:
        raise
    except MFGLabError as exc:
        errors.append(f"{type(exc).__name__}: {exc}")
    manifest.timings["compute"] = time.perf_counter() - t0
    manifest.errors = errors
    manifest.summary = summary
    if errors:
        manifest.exit_code = EXIT_SOLVER

    # single writer stage
    t1 = time.perf_counter()
    root = Path(plan.output["dir"])
    root.mkdir(parents=True, exist_ok=True)
    plan_text = json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n"
    for name, text in [("plan.resolved.json", plan_text)] + out.items:
        data = text.encode()
        (root / name).write_bytes(data)
        manifest.files.append({"path": name, "sha256": _digest(data), "bytes": len(data)})
    manifest.timings["write"] = time.perf_counter() - t1
    (root / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    return manifest
