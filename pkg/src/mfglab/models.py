"""
Closed-form Hamiltonians and couplings.

Hamiltonians are radial in the momentum, ``H(x, p) = g(|p|^2) + V(x)``:

================================  ==========================  ============
family                            g(s)                        V
================================  ==========================  ============
``quadratic``                     s / 2                       0
``lipschitz-convex``              sqrt(1 + s) - 1             0
``quadratic-with-potential``      s / 2                       expression
================================  ==========================  ============

Couplings are ``F(x, m) = f0(x) + c1*m - gamma*m**alpha``. The margin
``gamma*`` is the smallest rate for which ``F(x, m) + gamma* m`` is
nondecreasing in ``m`` on ``[DENSITY_FLOOR, M]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expressions import Expr, zero

__all__ = [
    "FAMILIES",
    "DENSITY_FLOOR",
    "HamiltonianSpec",
    "CouplingSpec",
    "TerminalSpec",
    "eval_hamiltonian",
    "eval_coupling",
    "convexity_bounds",
    "monotonicity_margin",
    "radial_profile",
    "coupling_arrays",
]

FAMILIES = ("quadratic", "lipschitz-convex", "quadratic-with-potential")

# F_m blows up at m = 0 when alpha < 1; margins are taken above this floor.
DENSITY_FLOOR = 1e-8
_MARGIN_SAMPLES = 1024


@dataclass(frozen=True)
class HamiltonianSpec:
    family: str = "quadratic"
    potential: Expr | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown Hamiltonian family {self.family!r}")
        if self.family != "quadratic-with-potential" and self.potential is not None:
            if not self.potential.is_zero():
                raise ValueError(f"family {self.family!r} takes no potential")

    @property
    def has_potential(self) -> bool:
        return self.family == "quadratic-with-potential" and self.potential is not None

    @property
    def global_lipschitz(self) -> float | None:
        """Global bound on ``|H_p|`` when one exists."""
        return 1.0 if self.family == "lipschitz-convex" else None


@dataclass(frozen=True)
class CouplingSpec:
    f0: Expr = field(default_factory=zero)
    c1: float = 0.0
    gamma: float = 0.0
    alpha: float = 1.0
    c_F: float = 0.0

    def __post_init__(self):
        if self.c1 < 0 or self.gamma < 0 or self.c_F < 0:
            raise ValueError("c1, gamma and c_F must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class TerminalSpec:
    u_T: Expr = field(default_factory=zero)


def radial_profile(family: str):
    """Return ``(g, g', g'')`` for the family, as functions of ``s = |p|^2``."""
    if family in ("quadratic", "quadratic-with-potential"):
        return (
            lambda s: 0.5 * s,
            lambda s: 0.5 * np.ones_like(s),
            lambda s: np.zeros_like(s),
        )
    if family == "lipschitz-convex":
        return (
            lambda s: np.sqrt(1.0 + s) - 1.0,
            lambda s: 0.5 / np.sqrt(1.0 + s),
            lambda s: -0.25 * (1.0 + s) ** -1.5,
        )
    raise ValueError(f"unknown Hamiltonian family {family!r}")


def eval_hamiltonian(spec: HamiltonianSpec, x, p):
    """Exact ``(H, H_p, H_pp)`` at a point ``x`` and momentum ``p``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    g, g1, g2 = radial_profile(spec.family)
    s = float(p @ p)
    H = float(g(s))
    if spec.has_potential:
        H += spec.potential.at(x)
    Hp = 2.0 * float(g1(s)) * p
    Hpp = 2.0 * float(g1(s)) * np.eye(p.size) + 4.0 * float(g2(s)) * np.outer(p, p)
    return H, Hp, Hpp


def convexity_bounds(spec: HamiltonianSpec, K: float) -> tuple[float, float, float]:
    """Tight ``(L_K, alpha_K, beta_K)`` over the ball ``|p| <= K``."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    if spec.family == "lipschitz-convex":
        return K / np.sqrt(1.0 + K * K), (1.0 + K * K) ** -1.5, 1.0
    return float(K), 1.0, 1.0


def coupling_arrays(spec: CouplingSpec, f0_values, m, *, floor: float = 0.0):
    """Vectorized ``(F, F_m)``; ``m`` is clipped below at ``floor`` for powers.

    Negative densities can appear transiently inside Newton iterations; the
    power term is evaluated on ``max(m, floor)`` so it stays real.
    """
    m = np.asarray(m, dtype=float)
    F = f0_values + spec.c1 * m
    Fm = np.full(m.shape, spec.c1)
    if spec.gamma != 0.0:
        if spec.alpha == 1.0:
            F = F - spec.gamma * m
            Fm = Fm - spec.gamma
        else:
            mc = np.maximum(m, floor)
            F = F - spec.gamma * mc**spec.alpha
            with np.errstate(divide="ignore"):
                Fm = Fm - spec.gamma * spec.alpha * mc ** (spec.alpha - 1.0)
    return F, Fm


def eval_coupling(spec: CouplingSpec, x, m: float) -> tuple[float, float]:
    """Exact ``(F, F_m)`` at a point; densities must be nonnegative."""
    if m < 0:
        raise ValueError(f"density must be nonnegative, got {m}")
    F, Fm = coupling_arrays(spec, spec.f0.at(x), np.array(float(m)))
    return float(F), float(Fm)


def monotonicity_margin(spec: CouplingSpec, M_bound: float, grid=None) -> float:
    """Smallest ``gamma*`` making ``F(x, m) + gamma* m`` nondecreasing.

    The infimum of ``F_m`` is taken over a dense sample of
    ``[DENSITY_FLOOR, M_bound]`` (and every node of ``grid`` when given;
    ``F_m`` of this family does not depend on ``x``, so the grid only matters
    for consistency with the general definition).
    """
    if M_bound <= 0:
        raise ValueError("M_bound must be positive")
    ms = np.linspace(DENSITY_FLOOR, M_bound, _MARGIN_SAMPLES)
    f0 = 0.0 if grid is None else spec.f0.on(grid).reshape(-1, 1)
    _, Fm = coupling_arrays(spec, f0, ms, floor=DENSITY_FLOOR)
    return float(max(0.0, -np.min(Fm)))
