"""
Periodic uniform grids on the flat torus and finite-difference operators.

The unit torus is sampled at ``x_i = i * h`` with ``h = 1 / n`` along each
axis. Operators come in matched pairs: the discrete divergence is defined as
the negative adjoint of the forward difference, so that

    <div v, f> = -<v, grad f>

holds exactly in the discrete inner product ``h**d * sum(...)``, and the
Laplacian is the composition ``div(grad f)`` of that pair (the usual 3-point
or 5-point stencil).

Fields are immutable: their value arrays are flagged read-only on creation.
The private ``_fwd``/``_bwd``/``_lap`` helpers act on bare arrays and are what
the time-stepping kernels use in their inner loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import GridError

__all__ = [
    "Grid",
    "Field",
    "VectorField",
    "build_grid",
    "gradient_pair",
    "laplacian",
    "divergence",
    "integrate",
    "inner",
    "norm",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic mesh on the unit torus of dimension ``d``."""

    n: int
    d: int = 1

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 4:
            raise GridError(f"grid.n must be an integer >= 4, got {self.n!r}")
        if self.d not in (1, 2):
            raise GridError(f"grid.d must be 1 or 2, got {self.d!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return np.arange(self.n) * self.h

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``self.shape`` (``ij`` indexing)."""
        return tuple(np.meshgrid(*([self.axis] * self.d), indexing="ij"))

    def field(self, values) -> Field:
        return Field(self, values)

    def constant(self, c: float) -> Field:
        return Field(self, np.full(self.shape, float(c)))


def build_grid(n: int, d: int = 1) -> Grid:
    """Create a periodic grid with ``n`` points per axis in dimension ``d``."""
    return Grid(int(n) if isinstance(n, (int, np.integer)) else n, d)


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class Field:
    """Real values sampled at the nodes of ``grid``."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.size:
            raise GridError(
                f"field has {values.size} values, grid needs {self.grid.size}"
            )
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise GridError("field values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    def __add__(self, other):
        return Field(self.grid, self.values + _values_on(self.grid, other))

    def __sub__(self, other):
        return Field(self.grid, self.values - _values_on(self.grid, other))

    def __mul__(self, other):
        return Field(self.grid, self.values * _values_on(self.grid, other))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """One value array per axis, all on the same grid."""

    grid: Grid
    components: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=float) for c in self.components)
        if len(comps) != self.grid.d:
            raise GridError(
                f"vector field needs {self.grid.d} components, got {len(comps)}"
            )
        frozen = []
        for c in comps:
            if c.size != self.grid.size:
                raise GridError("vector field component has the wrong size")
            if not np.all(np.isfinite(c)):
                raise GridError("vector field components must be finite")
            frozen.append(_frozen(c.reshape(self.grid.shape)))
        object.__setattr__(self, "components", tuple(frozen))

    def magnitude(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.components))


def _values_on(grid: Grid, other) -> np.ndarray | float:
    if isinstance(other, Field):
        _check_same_grid(grid, other.grid)
        return other.values
    return other


def _check_same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise GridError(f"grids differ: {a} vs {b}")


# -- array-level stencils (used directly by the kernels) ---------------------


def _ax(ndim: int, axis: int, sl: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def _fwd(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    # slicing instead of np.roll: these run once per time step
    nd = values.ndim
    out = np.empty_like(values)
    np.subtract(values[_ax(nd, axis, slice(1, None))],
                values[_ax(nd, axis, slice(None, -1))],
                out=out[_ax(nd, axis, slice(None, -1))])
    np.subtract(values[_ax(nd, axis, slice(0, 1))],
                values[_ax(nd, axis, slice(-1, None))],
                out=out[_ax(nd, axis, slice(-1, None))])
    out /= h
    return out


def _bwd(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    nd = values.ndim
    out = np.empty_like(values)
    np.subtract(values[_ax(nd, axis, slice(1, None))],
                values[_ax(nd, axis, slice(None, -1))],
                out=out[_ax(nd, axis, slice(1, None))])
    np.subtract(values[_ax(nd, axis, slice(0, 1))],
                values[_ax(nd, axis, slice(-1, None))],
                out=out[_ax(nd, axis, slice(0, 1))])
    out /= h
    return out


def _lap(values: np.ndarray, h: float, axes=None) -> np.ndarray:
    """Periodic 3-/5-point Laplacian over ``axes`` (default: all)."""
    axes = range(values.ndim) if axes is None else axes
    out = np.zeros_like(values)
    for ax in axes:
        out += _fwd(values, h, ax)
        out -= _bwd(values, h, ax)
    out /= h
    return out


# -- public operators --------------------------------------------------------


def gradient_pair(f: Field) -> tuple[VectorField, VectorField]:
    """One-sided differences ``((f[i+1]-f[i])/h, (f[i]-f[i-1])/h)`` per axis."""
    g = f.grid
    fwd = tuple(_fwd(f.values, g.h, ax) for ax in range(g.d))
    bwd = tuple(_bwd(f.values, g.h, ax) for ax in range(g.d))
    return VectorField(g, fwd), VectorField(g, bwd)


def laplacian(f: Field) -> Field:
    return Field(f.grid, _lap(f.values, f.grid.h))


def divergence(v: VectorField, adjoint_of: Literal["forward", "backward"] = "forward") -> Field:
    """Discrete divergence, the negative adjoint of a one-sided gradient.

    With the default ``adjoint_of="forward"`` this is the backward difference,
    which pairs with the forward gradient; ``"backward"`` gives the forward
    difference, pairing with the backward gradient.
    """
    g = v.grid
    if adjoint_of == "forward":
        parts = [_bwd(c, g.h, ax) for ax, c in enumerate(v.components)]
    elif adjoint_of == "backward":
        parts = [_fwd(c, g.h, ax) for ax, c in enumerate(v.components)]
    else:
        raise ValueError(f"unknown gradient pairing {adjoint_of!r}")
    return Field(g, sum(parts))


def integrate(f: Field) -> float:
    return float(f.grid.cell_volume * np.sum(f.values))


def inner(a: Field | VectorField, b: Field | VectorField) -> float:
    """Discrete L2 inner product of two scalar or two vector fields."""
    _check_same_grid(a.grid, b.grid)
    vol = a.grid.cell_volume
    if isinstance(a, VectorField) and isinstance(b, VectorField):
        return float(vol * sum(np.sum(x * y) for x, y in zip(a.components, b.components)))
    if isinstance(a, Field) and isinstance(b, Field):
        return float(vol * np.sum(a.values * b.values))
    raise TypeError("inner product needs two fields of the same kind")


def norm(f: Field, kind: Literal["sup", "L1", "L2"] = "sup") -> float:
    vals = f.values
    if kind == "sup":
        return float(np.max(np.abs(vals)))
    if kind == "L1":
        return float(f.grid.cell_volume * np.sum(np.abs(vals)))
    if kind == "L2":
        return float(np.sqrt(f.grid.cell_volume * np.sum(vals * vals)))
    raise ValueError(f"unknown norm {kind!r}")
