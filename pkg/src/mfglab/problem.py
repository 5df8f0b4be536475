"""The data of a mean field game on the torus."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .grid import Field, Grid, _check_same_grid, integrate
from .models import CouplingSpec, HamiltonianSpec, TerminalSpec

__all__ = ["MFGProblem", "MASS_TOL"]

MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MFGProblem:
    """Diffusion ``kappa``, Hamiltonian, coupling, terminal cost and ``m0``.

    ``m0`` defaults to the uniform density. Derived arrays (``f0`` on the
    grid, the potential, ``u_T``) are computed once and cached.
    """

    grid: Grid
    kappa: float = 1.0
    hamiltonian: HamiltonianSpec = field(default_factory=HamiltonianSpec)
    coupling: CouplingSpec = field(default_factory=CouplingSpec)
    terminal: TerminalSpec = field(default_factory=TerminalSpec)
    m0: Field | None = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.m0 is None:
            object.__setattr__(self, "m0", self.grid.constant(1.0))
        _check_same_grid(self.grid, self.m0.grid)
        if np.min(self.m0.values) < 0:
            raise ValueError("m0 must be nonnegative")
        mass = integrate(self.m0)
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"m0 must have unit mass, got {mass:.15g}")

    def replace(self, **changes) -> MFGProblem:
        return dataclasses.replace(self, **changes)

    @cached_property
    def f0_values(self) -> np.ndarray:
        return self.coupling.f0.on(self.grid)

    @cached_property
    def potential_values(self) -> np.ndarray | float:
        if self.hamiltonian.has_potential:
            return self.hamiltonian.potential.on(self.grid)
        return 0.0

    @cached_property
    def terminal_values(self) -> np.ndarray:
        return self.terminal.u_T.on(self.grid)
