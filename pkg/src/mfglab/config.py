"""
Experiment configuration: a versioned JSON schema resolved into a plan.

A config names the problem, one action and its parameters. Every omitted
field is filled from the defaults below and echoed back in the resolved
plan, so a run directory always documents exactly what was computed.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .expressions import parse_expr
from .grid import build_grid
from .models import FAMILIES, CouplingSpec, HamiltonianSpec, TerminalSpec
from .problem import MFGProblem
from .solvers import SolverConfig

__all__ = ["SCHEMA_VERSION", "ACTIONS", "ExperimentPlan", "parse_config", "resolve_config"]

SCHEMA_VERSION = 1

ACTIONS = (
    "solve-finite",
    "solve-ergodic",
    "solve-discounted",
    "turnpike",
    "horizon-limit",
    "vanishing-discount",
    "commutation",
    "multiplicity",
    "lemmas",
)

_PROBLEM_DEFAULTS = {
    "grid": {"n": 128, "d": 1},
    "kappa": 1.0,
    "hamiltonian": {"family": "quadratic", "potential": None},
    "coupling": {"f0": None, "c1": 0.0, "gamma": 0.0, "alpha": 1.0, "c_F": 0.0},
    "terminal": {"u_T": None},
    "m0": None,
}

_SOLVER_DEFAULTS = {
    "damping": 0.5,
    "tol": 1e-8,
    "max_iters": 400,
    "time_scheme": "linearized",
    "adaptive_damping": True,
    "fictitious_play": False,
    "dt": 0.01,
    "newton_tol": 1e-10,
    "newton_max_iters": 60,
    "fallback_longtime": True,
    "longtime_T": None,
}

_PARAM_DEFAULTS = {
    "solve-finite": {"T": 1.0, "shift": False},
    "solve-ergodic": {"method": "newton"},
    "solve-discounted": {"delta": 0.1},
    "turnpike": {"T": 10.0, "fit_window": None, "model": "two_sided_free"},
    "horizon-limit": {"T_list": [10.0, 20.0, 40.0], "t_probe": 2.0},
    "vanishing-discount": {
        "delta_list": [0.2, 0.1, 0.05, 0.025],
        "theta_offset": 0.0,
        "evolution": True,
        "T_trunc": None,
    },
    "commutation": {"deltas": [0.1, 0.05, 0.025], "T_trunc": None, "tol": 1e-3},
    "multiplicity": {"T": 10.0, "seeds": 3, "threshold": 1e-3},
    "lemmas": {"cases": "default"},
}

_TOP_KEYS = {"schema_version", "action", "problem", "params", "solver", "output", "seed", "jobs"}
_OUTPUT_DEFAULTS = {"dir": "out", "format": "csv"}
_EXPR_FIELDS = {"problem.hamiltonian.potential", "problem.coupling.f0",
                "problem.terminal.u_T", "problem.m0"}


def _locate(text: str, path: str) -> int | None:
    """Best-effort line number of a dotted field path in the JSON text."""
    if not text:
        return None
    pos = 0
    for key in re.sub(r"\[\d+\]", "", path).split("."):
        m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def _merge(user: Any, defaults: dict, path: str, text: str) -> dict:
    if not isinstance(user, dict):
        raise ConfigError("expected an object", field=path or None, line=_locate(text, path))
    unknown = sorted(set(user) - set(defaults))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(f"unknown key(s) {unknown}", field=where, line=_locate(text, where))
    out = {}
    for key, default in defaults.items():
        sub = f"{path}.{key}" if path else key
        if key not in user:
            out[key] = copy.deepcopy(default)
        elif isinstance(default, dict) and sub not in _EXPR_FIELDS:
            out[key] = _merge(user[key], default, sub, text)
        else:
            out[key] = user[key]
    return out


def _num(value, path, text, *, positive=False, nonneg=False, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    bad = isinstance(value, bool) or not isinstance(value, (int, float))
    if integer:
        bad = bad or not float(value).is_integer()
    if bad or not np.isfinite(value):
        raise ConfigError("expected " + ("an integer" if integer else "a finite number"),
                          field=path, line=_locate(text, path))
    if positive and not value > 0:
        raise ConfigError("must be positive", field=path, line=_locate(text, path))
    if nonneg and value < 0:
        raise ConfigError("must be nonnegative", field=path, line=_locate(text, path))
    return int(value) if integer else float(value)


def _num_list(value, path, text, **kw):
    if not isinstance(value, list) or not value:
        raise ConfigError("expected a nonempty list of numbers", field=path,
                          line=_locate(text, path))
    return [_num(v, f"{path}[{i}]", text, **kw) for i, v in enumerate(value)]


def _flag(value, path, text):
    if not isinstance(value, bool):
        raise ConfigError("expected true or false", field=path, line=_locate(text, path))
    return value


@dataclass(frozen=True, eq=False)
class ExperimentPlan:
    """Fully resolved experiment: every field explicit."""

    action: str
    problem: dict
    params: dict
    solver: dict
    output: dict = field(default_factory=lambda: dict(_OUTPUT_DEFAULTS))
    seed: int = 0
    jobs: int = 1
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "action": self.action,
            "problem": copy.deepcopy(self.problem),
            "params": copy.deepcopy(self.params),
            "solver": copy.deepcopy(self.solver),
            "output": dict(self.output),
            "seed": self.seed,
            "jobs": self.jobs,
        }

    def digest(self) -> str:
        """SHA-256 of the numerically relevant part of the plan.

        Output location and worker count do not change results and are
        left out.
        """
        d = self.to_dict()
        d.pop("jobs")
        d["output"] = {"format": d["output"]["format"]}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_(self, **changes) -> ExperimentPlan:
        d = self.to_dict()
        for key, value in changes.items():
            if key in ("dir", "format"):
                d["output"][key] = value
            else:
                d[key] = value
        return resolve_config(d)

    def build_problem(self) -> MFGProblem:
        p = self.problem
        grid = build_grid(p["grid"]["n"], p["grid"]["d"])
        ham = HamiltonianSpec(p["hamiltonian"]["family"],
                              parse_expr(p["hamiltonian"]["potential"],
                                         "problem.hamiltonian.potential")
                              if p["hamiltonian"]["potential"] is not None else None)
        c = p["coupling"]
        coupling = CouplingSpec(parse_expr(c["f0"], "problem.coupling.f0"),
                                c["c1"], c["gamma"], c["alpha"], c["c_F"])
        terminal = TerminalSpec(parse_expr(p["terminal"]["u_T"], "problem.terminal.u_T"))
        m0 = None
        if p["m0"] is not None:
            values = parse_expr(p["m0"], "problem.m0").on(grid)
            if np.min(values) < 0:
                raise ConfigError("m0 must be nonnegative on the grid", field="problem.m0")
            mass = grid.cell_volume * values.sum()
            if not mass > 0:
                raise ConfigError("m0 must have positive mass", field="problem.m0")
            # normalized to unit mass on the grid
            m0 = grid.field(values / mass)
        return MFGProblem(grid, p["kappa"], ham, coupling, terminal, m0)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)


def resolve_config(raw: Any, text: str = "") -> ExperimentPlan:
    """Validate a parsed config object and fill in every default.

    Args:
        raw: the decoded JSON object.
        text: the source text, used only to report line numbers.

    Raises:
        ConfigError: naming the offending field path (and line when known).
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", field=unknown[0],
                          line=_locate(text, unknown[0]))
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}",
                          field="schema_version", line=_locate(text, "schema_version"))
    action = raw.get("action")
    if action not in ACTIONS:
        raise ConfigError(f"action must be one of {list(ACTIONS)}, got {action!r}",
                          field="action", line=_locate(text, "action"))

    problem = _merge(raw.get("problem", {}), _PROBLEM_DEFAULTS, "problem", text)
    params = _merge(raw.get("params", {}), _PARAM_DEFAULTS[action], "params", text)
    solver = _merge(raw.get("solver", {}), _SOLVER_DEFAULTS, "solver", text)
    output = _merge(raw.get("output", {}), _OUTPUT_DEFAULTS, "output", text)

    # problem
    g = problem["grid"]
    g["n"] = _num(g["n"], "problem.grid.n", text, integer=True)
    if g["n"] < 4:
        raise ConfigError("must be an integer >= 4", field="problem.grid.n",
                          line=_locate(text, "problem.grid.n"))
    g["d"] = _num(g["d"], "problem.grid.d", text, integer=True)
    if g["d"] not in (1, 2):
        raise ConfigError("must be 1 or 2", field="problem.grid.d",
                          line=_locate(text, "problem.grid.d"))
    problem["kappa"] = _num(problem["kappa"], "problem.kappa", text, positive=True)
    fam = problem["hamiltonian"]["family"]
    if fam not in FAMILIES:
        raise ConfigError(f"unknown family {fam!r}, expected one of {list(FAMILIES)}",
                          field="problem.hamiltonian.family",
                          line=_locate(text, "problem.hamiltonian.family"))
    c = problem["coupling"]
    for key in ("c1", "gamma", "c_F"):
        c[key] = _num(c[key], f"problem.coupling.{key}", text, nonneg=True)
    c["alpha"] = _num(c["alpha"], "problem.coupling.alpha", text, positive=True)
    for path in _EXPR_FIELDS:
        keys = path.split(".")[1:]
        holder = problem
        for k in keys[:-1]:
            holder = holder[k]
        try:
            expr = parse_expr(holder[keys[-1]], path)
        except ConfigError as exc:
            raise ConfigError(str(exc).split(": ", 1)[-1], field=exc.field,
                              line=_locate(text, path)) from None
        for term in expr.terms:
            dim = getattr(term, "k", getattr(term, "center", None))
            if dim is not None and len(dim) != g["d"]:
                raise ConfigError("term dimension does not match problem.grid.d",
                                  field=path, line=_locate(text, path))
        holder[keys[-1]] = expr.to_json() if holder[keys[-1]] is not None else None

    # solver
    s = solver
    s["damping"] = _num(s["damping"], "solver.damping", text, positive=True)
    if s["damping"] > 1:
        raise ConfigError("must lie in (0, 1]", field="solver.damping",
                          line=_locate(text, "solver.damping"))
    for key in ("tol", "dt", "newton_tol"):
        s[key] = _num(s[key], f"solver.{key}", text, positive=True)
    for key in ("max_iters", "newton_max_iters"):
        s[key] = _num(s[key], f"solver.{key}", text, positive=True, integer=True)
    for key in ("adaptive_damping", "fictitious_play", "fallback_longtime"):
        s[key] = _flag(s[key], f"solver.{key}", text)
    s["longtime_T"] = _num(s["longtime_T"], "solver.longtime_T", text, positive=True,
                           allow_none=True)
    if s["time_scheme"] not in ("linearized", "implicit", "imex"):
        raise ConfigError("must be one of linearized, implicit, imex",
                          field="solver.time_scheme", line=_locate(text, "solver.time_scheme"))

    _check_params(action, params, text)

    if output["format"] not in ("csv", "json"):
        raise ConfigError("must be csv or json", field="output.format",
                          line=_locate(text, "output.format"))
    if not isinstance(output["dir"], str) or not output["dir"]:
        raise ConfigError("expected a directory path", field="output.dir",
                          line=_locate(text, "output.dir"))
    seed = _num(raw.get("seed", 0), "seed", text, nonneg=True, integer=True)
    if seed >= 2**64:
        raise ConfigError("must fit in 64 bits", field="seed", line=_locate(text, "seed"))
    jobs = _num(raw.get("jobs", 1), "jobs", text, positive=True, integer=True)
    return ExperimentPlan(action, problem, params, solver, output, seed, jobs)


def _check_params(action: str, p: dict, text: str) -> None:
    P = "params."
    if "T" in p:
        p["T"] = _num(p["T"], P + "T", text, positive=True)
    if action == "solve-finite":
        p["shift"] = _flag(p["shift"], P + "shift", text)
    elif action == "solve-ergodic":
        if p["method"] not in ("newton", "longtime"):
            raise ConfigError("must be newton or longtime", field=P + "method",
                              line=_locate(text, P + "method"))
    elif action == "solve-discounted":
        p["delta"] = _num(p["delta"], P + "delta", text, positive=True)
    elif action == "turnpike":
        if p["fit_window"] is not None:
            w = _num_list(p["fit_window"], P + "fit_window", text, nonneg=True)
            if len(w) != 2 or not 0 <= w[0] < w[1] <= 1:
                raise ConfigError("expected [a, b] with 0 <= a < b <= 1",
                                  field=P + "fit_window", line=_locate(text, P + "fit_window"))
            p["fit_window"] = w
        if p["model"] not in ("two_sided", "two_sided_free"):
            raise ConfigError("must be two_sided or two_sided_free", field=P + "model",
                              line=_locate(text, P + "model"))
    elif action == "horizon-limit":
        p["T_list"] = _num_list(p["T_list"], P + "T_list", text, positive=True)
        if any(b <= a for a, b in zip(p["T_list"][:-1], p["T_list"][1:])):
            raise ConfigError("must be increasing", field=P + "T_list",
                              line=_locate(text, P + "T_list"))
        p["t_probe"] = _num(p["t_probe"], P + "t_probe", text, nonneg=True)
        if not p["t_probe"] < min(p["T_list"]) / 2:
            raise ConfigError("must be below min(T_list) / 2", field=P + "t_probe",
                              line=_locate(text, P + "t_probe"))
    elif action == "vanishing-discount":
        d = _num_list(p["delta_list"], P + "delta_list", text, positive=True)
        if any(b >= a for a, b in zip(d[:-1], d[1:])):
            raise ConfigError("must be decreasing", field=P + "delta_list",
                              line=_locate(text, P + "delta_list"))
        p["delta_list"] = d
        p["theta_offset"] = _num(p["theta_offset"], P + "theta_offset", text)
        p["evolution"] = _flag(p["evolution"], P + "evolution", text)
        p["T_trunc"] = _num(p["T_trunc"], P + "T_trunc", text, positive=True, allow_none=True)
    elif action == "commutation":
        p["deltas"] = _num_list(p["deltas"], P + "deltas", text, positive=True)
        if len(set(p["deltas"])) != len(p["deltas"]):
            raise ConfigError("must be distinct", field=P + "deltas",
                              line=_locate(text, P + "deltas"))
        p["T_trunc"] = _num(p["T_trunc"], P + "T_trunc", text, positive=True, allow_none=True)
        p["tol"] = _num(p["tol"], P + "tol", text, positive=True)
    elif action == "multiplicity":
        seeds = p["seeds"]
        if isinstance(seeds, list):
            p["seeds"] = [_num(v, f"{P}seeds[{i}]", text, nonneg=True, integer=True)
                          for i, v in enumerate(seeds)]
        else:
            p["seeds"] = _num(seeds, P + "seeds", text, positive=True, integer=True)
        p["threshold"] = _num(p["threshold"], P + "threshold", text, positive=True)
    elif action == "lemmas":
        if p["cases"] != "default":
            raise ConfigError('only "default" is supported', field=P + "cases",
                              line=_locate(text, P + "cases"))


def parse_config(path: str | Path) -> ExperimentPlan:
    """Read and resolve a JSON config file.

    Raises:
        ConfigError: malformed JSON or schema violation.
        OSError: the file cannot be read.
    """
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return resolve_config(raw, text)
