import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mfglab.lab
from mfglab import (
    ConfigError,
    ConvergenceError,
    StudyReport,
    emit_series,
    load_series,
    parse_config,
    resolve_config,
    run_plan,
)
from mfglab.cli import main
from mfglab.io import format_number
from mfglab.lab import TurnpikeReport


def _write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj, indent=2))
    return path


def test_minimal_config_fills_defaults(tmp_path):
    plan = parse_config(_write(tmp_path, {"schema_version": 1, "action": "solve-finite",
                                          "params": {"T": 1.0}}))
    d = plan.to_dict()
    assert d["params"] == {"T": 1.0, "shift": False}
    assert d["problem"]["grid"] == {"n": 128, "d": 1}
    assert d["solver"]["damping"] == 0.5 and d["solver"]["time_scheme"] == "linearized"
    assert d["output"] == {"dir": "out", "format": "csv"}
    # resolving the echoed plan is a fixed point
    assert resolve_config(d).to_dict() == d


def test_small_grid_rejected_with_field_and_line(tmp_path):
    text = '{\n  "action": "solve-finite",\n  "problem": {\n    "grid": {"n": 3}\n  }\n}\n'
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, text))
    assert info.value.field == "problem.grid.n"
    assert info.value.line == 4


def test_unknown_key_rejected(tmp_path):
    cfg = {"action": "multiplicity", "problem": {"coupling": {"gamma_typo": 0.1}}}
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, cfg))
    assert "gamma_typo" in str(info.value)
    assert info.value.field == "problem.coupling.gamma_typo"


@pytest.mark.parametrize(
    "cfg,field",
    [
        ({"action": "fly"}, "action"),
        ({"action": "turnpike", "schema_version": 2}, "schema_version"),
        ({"action": "vanishing-discount", "params": {"delta_list": [0.1, 0.2]}},
         "params.delta_list"),
        ({"action": "horizon-limit", "params": {"T_list": [4.0, 8.0], "t_probe": 3.0}},
         "params.t_probe"),
        ({"action": "turnpike", "solver": {"damping": 2.0}}, "solver.damping"),
        ({"action": "turnpike", "problem": {"coupling": {"f0": {"kind": "tan"}}}},
         "problem.coupling.f0.kind"),
        ({"action": "turnpike", "output": {"format": "xml"}}, "output.format"),
    ],
)
def test_schema_violations(tmp_path, cfg, field):
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, cfg))
    assert info.value.field == field


def test_malformed_json_reports_line(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, '{\n "action": \n}'))
    assert info.value.line == 3


def test_m0_is_normalized(tmp_path):
    plan = parse_config(_write(tmp_path, {
        "action": "solve-finite",
        "problem": {"grid": {"n": 16}, "m0": [2.0, {"kind": "cos", "k": 1}]}}))
    p = plan.build_problem()
    assert p.grid.cell_volume * p.m0.values.sum() == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(allow_nan=False))
def test_csv_number_round_trip(x):
    assert float(format_number(x)) == x


def _turnpike_report():
    t = np.linspace(0, 1, 5)
    return TurnpikeReport(1.0, t, np.exp(-t), np.exp(-t), 1.0, 1.0, 1.0, 0.0, (0.05, 0.95),
                          1e-13, 5, False, "two_sided_free", 0.5, 0.5, "")


def test_turnpike_series_schema_and_json_round_trip(tmp_path):
    rep = _turnpike_report()
    emit_series(rep, tmp_path / "p.csv")
    header = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert header == "t,d,model_d"
    emit_series(rep, tmp_path / "p.json", "json")
    back = load_series(tmp_path / "p.json")
    assert back.to_dict() == rep.to_dict()


def test_study_series_schema_and_round_trip(tmp_path):
    rep = StudyReport("vanishing-discount", "delta", [0.2, 0.1],
                      columns={"e_delta": [2.0, 1.0], "ratio": [float("nan"), 0.5],
                               "verdict": ["pass", "pass"]},
                      verdicts={"ratio": True})
    emit_series(rep, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "delta,e_delta,ratio,verdict"
    assert lines[2] == "0.10000000000000001,1,0.5,pass"
    emit_series(rep, tmp_path / "s.json", "json")
    back = load_series(tmp_path / "s.json")
    assert json.dumps(back.to_dict()) == json.dumps(rep.to_dict())


def _plan(tmp_path, action, sub="run", **extra):
    cfg = {"schema_version": 1, "action": action, "problem": {"grid": {"n": 32}},
           "output": {"dir": str(tmp_path / sub)}}
    cfg.update(extra)
    return resolve_config(cfg)


def test_turnpike_smoke_manifest(tmp_path):
    plan = _plan(tmp_path, "turnpike", params={"T": 1.0})
    manifest = run_plan(plan)
    assert manifest.exit_code == 0
    names = {f["path"] for f in manifest.files}
    assert names == {"plan.resolved.json", "profile.csv", "report.json"}
    root = tmp_path / "run"
    for f in manifest.files:
        assert hashlib.sha256((root / f["path"]).read_bytes()).hexdigest() == f["sha256"]
    on_disk = json.loads((root / "manifest.json").read_text())
    assert on_disk["plan_hash"] == plan.digest()
    assert json.loads((root / "plan.resolved.json").read_text()) == plan.to_dict()


def test_same_plan_twice_gives_identical_digests(tmp_path):
    a = run_plan(_plan(tmp_path, "multiplicity", "a", params={"T": 0.5, "seeds": 2}, seed=7))
    b = run_plan(_plan(tmp_path, "multiplicity", "b", params={"T": 0.5, "seeds": 2}, seed=7,
                       jobs=2))
    digests = lambda m: {f["path"]: f["sha256"] for f in m.files if f["path"] != "plan.resolved.json"}
    assert digests(a) == digests(b)
    assert a.plan_hash == b.plan_hash


def test_failing_row_keeps_other_rows(tmp_path, monkeypatch):
    real = mfglab.lab.solve_discounted_stationary

    def flaky(problem, delta, cfg=None):
        if delta >= 1.0:
            raise ConvergenceError(f"forced failure at delta={delta}")
        return real(problem, delta, cfg)

    monkeypatch.setattr(mfglab.lab, "solve_discounted_stationary", flaky)
    plan = _plan(tmp_path, "vanishing-discount",
                 params={"delta_list": [5.0, 0.2, 0.1], "evolution": False})
    manifest = run_plan(plan)
    assert manifest.exit_code == 3
    assert any("forced failure" in e for e in manifest.errors)
    rows = (tmp_path / "run" / "study.csv").read_text().splitlines()
    assert len(rows) == 4
    assert rows[1].split(",")[1] == "nan" and rows[1].endswith("error")
    assert all(r.endswith("pass") for r in rows[2:])


def test_cli_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, {"action": "solve-ergodic", "problem": {"grid": {"n": 16}}})
    assert main(["solve-ergodic", "--config", str(good), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "stationary.csv").exists()
    assert main(["solve-finite", "--config", str(good), "--out", str(tmp_path / "o")]) == 2
    bad = _write(tmp_path, {"action": "solve-ergodic", "problem": {"grid": {"n": 3}}}, "b.json")
    assert main(["solve-ergodic", "--config", str(bad)]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["solve-ergodic", "--config", str(good), "--out", str(blocker / "x")]) == 4
    capsys.readouterr()


def test_cli_json_format(tmp_path):
    cfg = _write(tmp_path, {"action": "solve-discounted", "problem": {"grid": {"n": 16}}})
    assert main(["solve-discounted", "--config", str(cfg), "--out", str(tmp_path / "j"),
                 "--format", "json"]) == 0
    payload = json.loads((tmp_path / "j" / "stationary.json").read_text())
    assert payload["schema_version"] == 1
    assert len(payload["data"]["u_delta"]) == 16
