"""Serialization of reports: CSV with 17 significant digits, versioned JSON."""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .lab import LemmaReport, StudyReport, TurnpikeReport

__all__ = ["SERIES_SCHEMA_VERSION", "emit_series", "load_series", "format_number", "to_jsonable"]

SERIES_SCHEMA_VERSION = 1

_TYPES = {"TurnpikeReport": TurnpikeReport, "StudyReport": StudyReport}


def format_number(x: Any) -> str:
    """Text form that parses back to the same double."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy scalars and arrays to plain Python values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _columns(report: Any) -> dict:
    if isinstance(report, (TurnpikeReport, StudyReport)):
        return report.series()
    if isinstance(report, dict):
        return report
    if isinstance(report, (list, tuple)) and all(isinstance(r, LemmaReport) for r in report):
        rows = [(r.lemma, r.case, k, v, r.passed) for r in report for k, v in r.constants.items()]
        names = ("lemma", "case", "constant", "value", "passed")
        return {n: [row[i] for row in rows] for i, n in enumerate(names)}
    raise TypeError(f"cannot emit series for {type(report).__name__}")


def _payload(report: Any) -> dict:
    if isinstance(report, (TurnpikeReport, StudyReport)):
        kind, data = type(report).__name__, report.to_dict()
    elif isinstance(report, (list, tuple)) and all(isinstance(r, LemmaReport) for r in report):
        kind, data = "LemmaReports", [r.to_dict() for r in report]
    else:
        kind, data = "Series", {k: list(v) for k, v in _columns(report).items()}
    return {"schema_version": SERIES_SCHEMA_VERSION, "type": kind, "data": to_jsonable(data)}


def render_csv(report: Any) -> str:
    cols = _columns(report)
    names = list(cols)
    lengths = {len(cols[n]) for n in names}
    if len(lengths) > 1:
        raise ValueError("series columns have different lengths")
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for row in zip(*(cols[n] for n in names)):
        writer.writerow([format_number(v) for v in row])
    return buf.getvalue()


def render_json(report: Any) -> str:
    return json.dumps(_payload(report), indent=2, sort_keys=True) + "\n"


def emit_series(report: Any, path: str | Path, format: str = "csv") -> Path:
    """Write a report's series to ``path``.

    Args:
        report: a ``TurnpikeReport``, ``StudyReport``, list of
            ``LemmaReport`` or a mapping of column name to values.
        path: destination file.
        format: ``"csv"`` (header row, one row per sample, 17 significant
            digits) or ``"json"`` (schema-versioned object).

    Raises:
        OSError: the path cannot be written.
    """
    if format == "csv":
        text = render_csv(report)
    elif format == "json":
        text = render_json(report)
    else:
        raise ValueError(f"format must be csv or json, got {format!r}")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _nan_float(x):
    return float("nan") if x is None else x


def load_series(path: str | Path) -> Any:
    """Inverse of :func:`emit_series` for the JSON format.

    CSV files load as a mapping of column name to list of strings.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".csv":
        rows = list(csv.reader(_io.StringIO(text)))
        return {name: [r[i] for r in rows[1:]] for i, name in enumerate(rows[0])}
    payload = json.loads(text)
    if payload.get("schema_version") != SERIES_SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {payload.get('schema_version')!r}")
    kind, data = payload["type"], payload["data"]
    if kind in _TYPES:
        return _TYPES[kind].from_dict(data)
    if kind == "LemmaReports":
        return [LemmaReport(**d) for d in data]
    return data


def is_nan(x) -> bool:
    return isinstance(x, float) and math.isnan(x)
