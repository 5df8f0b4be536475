"""
Closed grammar for spatial data (f0, m0, u_T, potentials).

An expression is an affine combination of

* constants,
* Fourier modes ``amp * sin(2*pi*k.x)`` / ``amp * cos(2*pi*k.x)`` with
  integer wave vectors ``k``,
* Gaussian bumps wrapped periodically onto the torus.

JSON form: a number, a single term object, or a list of term objects::

    1.0
    {"kind": "cos", "k": 1, "amp": 0.5}
    [{"kind": "const", "value": 1.0},
     {"kind": "gauss", "center": 0.3, "width": 0.05, "amp": 2.0}]
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from .errors import ConfigError
from .grid import Field, Grid

__all__ = ["Const", "Mode", "Bump", "Expr", "parse_expr", "zero", "constant", "mode"]

_IMAGES = (-1, 0, 1)


@dataclass(frozen=True)
class Const:
    value: float

    def __call__(self, coords: tuple[np.ndarray, ...]) -> np.ndarray:
        return np.full(np.shape(coords[0]), self.value, dtype=float)

    def to_json(self) -> dict:
        return {"kind": "const", "value": self.value}


@dataclass(frozen=True)
class Mode:
    kind: str  # "sin" or "cos"
    k: tuple[int, ...]
    amp: float = 1.0

    def __call__(self, coords):
        phase = 2.0 * np.pi * sum(ki * xi for ki, xi in zip(self.k, coords))
        fn = np.sin if self.kind == "sin" else np.cos
        return self.amp * fn(phase)

    def to_json(self) -> dict:
        k = self.k[0] if len(self.k) == 1 else list(self.k)
        return {"kind": self.kind, "k": k, "amp": self.amp}


@dataclass(frozen=True)
class Bump:
    center: tuple[float, ...]
    width: float
    amp: float = 1.0

    def __call__(self, coords):
        d = len(coords)
        total = np.zeros(np.shape(coords[0]))
        # sum over neighbouring periodic images; widths stay well below 1
        for shift in np.ndindex(*([len(_IMAGES)] * d)):
            r2 = sum(
                (x - c - _IMAGES[s]) ** 2
                for x, c, s in zip(coords, self.center, shift)
            )
            total = total + np.exp(-r2 / (2.0 * self.width**2))
        return self.amp * total

    def to_json(self) -> dict:
        c = self.center[0] if len(self.center) == 1 else list(self.center)
        return {"kind": "gauss", "center": c, "width": self.width, "amp": self.amp}


Term = Union[Const, Mode, Bump]


@dataclass(frozen=True)
class Expr:
    """Sum of terms; evaluates on grids or at single points."""

    terms: tuple[Term, ...] = ()

    def on(self, grid: Grid) -> np.ndarray:
        coords = grid.coordinates()
        out = np.zeros(grid.shape)
        for term in self.terms:
            self._check_dim(term, grid.d)
            out = out + term(coords)
        return out

    def field(self, grid: Grid) -> Field:
        return Field(grid, self.on(grid))

    def at(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        coords = tuple(np.array(xi) for xi in x)
        total = 0.0
        for term in self.terms:
            self._check_dim(term, len(x))
            total += float(term(coords))
        return total

    @staticmethod
    def _check_dim(term: Term, d: int) -> None:
        if isinstance(term, Mode) and len(term.k) != d:
            raise ValueError(f"wave vector {term.k} does not match dimension {d}")
        if isinstance(term, Bump) and len(term.center) != d:
            raise ValueError(f"bump center {term.center} does not match dimension {d}")

    def __add__(self, other: Expr) -> Expr:
        return Expr(self.terms + other.terms)

    def is_zero(self) -> bool:
        return all(
            (isinstance(t, Const) and t.value == 0.0)
            or (not isinstance(t, Const) and t.amp == 0.0)
            for t in self.terms
        )

    def to_json(self) -> list[dict]:
        return [t.to_json() for t in self.terms]


def zero() -> Expr:
    return Expr(())


def constant(c: float) -> Expr:
    return Expr((Const(float(c)),))


def mode(kind: str, k: int | tuple[int, ...] = 1, amp: float = 1.0) -> Expr:
    k = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
    return Expr((Mode(kind, tuple(int(v) for v in k), float(amp)),))


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", field=path)
    if not np.isfinite(value):
        raise ConfigError("expected a finite number", field=path)
    return float(value)


def _vector(value: Any, path: str, cast) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(cast(v, f"{path}[{i}]") for i, v in enumerate(value))
    return (cast(value, path),)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("expected an integer", field=path)
    return value


_TERM_KEYS = {
    "const": {"kind", "value"},
    "sin": {"kind", "k", "amp"},
    "cos": {"kind", "k", "amp"},
    "gauss": {"kind", "center", "width", "amp"},
}


def _parse_term(obj: Any, path: str) -> Term:
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return Const(_number(obj, path))
    if not isinstance(obj, dict):
        raise ConfigError("expression term must be a number or an object", field=path)
    kind = obj.get("kind")
    if kind not in _TERM_KEYS:
        raise ConfigError(f"unknown term kind {kind!r}", field=f"{path}.kind")
    unknown = set(obj) - _TERM_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=path)
    if kind == "const":
        return Const(_number(obj.get("value", 0.0), f"{path}.value"))
    amp = _number(obj.get("amp", 1.0), f"{path}.amp")
    if kind in ("sin", "cos"):
        return Mode(kind, _vector(obj.get("k", 1), f"{path}.k", _integer), amp)
    width = _number(obj.get("width", 0.1), f"{path}.width")
    if not 0.0 < width <= 0.25:
        raise ConfigError("gauss width must lie in (0, 0.25]", field=f"{path}.width")
    return Bump(_vector(obj.get("center", 0.5), f"{path}.center", _number), width, amp)


def parse_expr(obj: Any, path: str = "expr") -> Expr:
    """Build an :class:`Expr` from its JSON form."""
    if obj is None:
        return zero()
    if isinstance(obj, list):
        return Expr(tuple(_parse_term(t, f"{path}[{i}]") for i, t in enumerate(obj)))
    return Expr((_parse_term(obj, path),))
