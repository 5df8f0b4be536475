"""
Time-stepping kernels for the backward HJB and forward Fokker-Planck equations.

Spatial discretization
----------------------
The Hamiltonian is replaced by the Godunov-type monotone numerical Hamiltonian

    H_h(x, p+, p-) = g( sum_k min(p+_k, 0)^2 + max(p-_k, 0)^2 ) + V(x)

where ``p+``/``p-`` are the forward/backward differences of ``u``. Its first
derivatives ``a_k = dH_h/dp+_k <= 0`` and ``b_k = dH_h/dp-_k >= 0`` define
the upwind transport operator

    T(u) phi = sum_k a_k D+_k phi + b_k D-_k phi,

and the Fokker-Planck drift term is its exact transpose. Every step matrix is
therefore an M-matrix: densities stay nonnegative and mass is conserved.

Time schemes
------------
``"linearized"`` (default)
    One Newton step of the implicit scheme per frame, linearized at
    ``u^{n+1}``. Implicit diffusion and transport, no CFL restriction, and the
    discrete stationary states do not depend on ``dt``.
``"implicit"``
    Full Newton solve of the implicit step per frame; the Fokker-Planck step
    uses the transport linearized at the converged ``u^n``.
``"imex"``
    Implicit diffusion, explicit Hamiltonian; the Fokker-Planck step is the
    transpose of this linearization, which requires
    ``dt <= h / (2 max|H_p|)`` for positivity (checked every frame).

Linear systems are periodic tridiagonal in 1D (Sherman-Morrison) and sparse
LU in 2D. Every step is solved for the increment ``x^{new} - x^{old}`` with a
residual right-hand side; the step matrices have unit row sums only up to
round-off, and the increment form keeps that error proportional to the
change per step instead of to the solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import (
    CFLError,
    ConvergenceError,
    GridError,
    MassConservationError,
    NumericalBlowupError,
    PositivityError,
    SingularSystemError,
)
from .fitting import fit_exponential
from .grid import Field, Grid, VectorField, _bwd, _check_same_grid, _fwd, _lap
from .models import coupling_arrays, radial_profile
from .problem import MASS_TOL, MFGProblem
from .tridiag import solve_periodic_tridiagonal

__all__ = [
    "SCHEMES",
    "TimeGrid",
    "PathField",
    "LinearKernelReport",
    "numerical_hamiltonian",
    "transport",
    "transport_adjoint",
    "hjb_backward_path",
    "fp_forward_path",
    "linear_parabolic_backward",
    "linear_fp_forward",
    "adjointness_check",
    "fit_decay",
    "difference_matrices",
]

SCHEMES = ("linearized", "implicit", "imex")
POSITIVITY_TOL = 1e-12
_NEWTON_STEP_TOL = 1e-13
_NEWTON_STEP_MAX = 50


# -- time grids and paths ----------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of ``[0, T]`` into ``Nt`` steps."""

    T: float
    Nt: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"T must be positive and finite, got {self.T}")
        if not isinstance(self.Nt, (int, np.integer)) or self.Nt < 1:
            raise ValueError(f"Nt must be a positive integer, got {self.Nt!r}")

    @classmethod
    def from_step(cls, T: float, dt: float) -> TimeGrid:
        """Smallest grid on ``[0, T]`` whose step does not exceed ``dt``."""
        if not dt > 0:
            raise ValueError("dt must be positive")
        return cls(float(T), max(1, int(math.ceil(T / dt - 1e-9))))

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.Nt + 1)

    def check_cfl(self, grid: Grid, max_speed: float) -> None:
        """Raise :class:`CFLError` unless ``dt <= h / (2 max|H_p| + eps)``."""
        bound = grid.h / (2.0 * max_speed + 1e-300)
        if self.dt > bound:
            raise CFLError(
                f"dt = {self.dt:.3e} exceeds the transport bound {bound:.3e} "
                f"(max |H_p| = {max_speed:.3e})"
            )


@dataclass(frozen=True, eq=False)
class PathField:
    """``Nt + 1`` frames of a scalar field, one per node of ``time_grid``."""

    time_grid: TimeGrid
    grid: Grid
    frames: np.ndarray = field(repr=False)

    def __post_init__(self):
        frames = np.array(self.frames, dtype=float)
        expected = (self.time_grid.Nt + 1, *self.grid.shape)
        if frames.shape != expected:
            try:
                frames = frames.reshape(expected)
            except ValueError:
                raise GridError(
                    f"path has shape {frames.shape}, expected {expected}"
                ) from None
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.time_grid.times

    def frame(self, i: int) -> Field:
        return Field(self.grid, self.frames[i])

    def integrals(self) -> np.ndarray:
        axes = tuple(range(1, self.frames.ndim))
        return self.grid.cell_volume * np.sum(self.frames, axis=axes)

    def sup_norms(self) -> np.ndarray:
        axes = tuple(range(1, self.frames.ndim))
        return np.max(np.abs(self.frames), axis=axes)

    def shifted(self, offsets) -> PathField:
        """Subtract a per-frame constant (e.g. ``lambda * (T - t)``)."""
        offsets = np.asarray(offsets, dtype=float).reshape(
            (-1,) + (1,) * self.grid.d
        )
        return PathField(self.time_grid, self.grid, self.frames - offsets)


@dataclass(frozen=True)
class LinearKernelReport:
    """Empirical ``||path(t)|| ~ C exp(-nu s)`` with ``s`` the elapsed time."""

    nu: float
    C: float
    residual: float
    n_points: int


# -- sparse difference operators ---------------------------------------------


@lru_cache(maxsize=16)
def difference_matrices(grid: Grid):
    """Sparse ``(D+ per axis, D- per axis, Laplacian)`` on flattened fields."""
    n, h = grid.n, grid.h
    eye = sp.identity(n, format="csr")
    shift = sp.csr_matrix(
        (np.ones(n), (np.arange(n), (np.arange(n) + 1) % n)), shape=(n, n)
    )
    dp1 = (shift - eye) / h
    dm1 = (eye - shift.T) / h
    if grid.d == 1:
        Dp, Dm = [dp1.tocsr()], [dm1.tocsr()]
    else:
        Dp = [sp.kron(dp1, eye, "csr"), sp.kron(eye, dp1, "csr")]
        Dm = [sp.kron(dm1, eye, "csr"), sp.kron(eye, dm1, "csr")]
    lap = sum(dm @ dp for dm, dp in zip(Dm, Dp)).tocsr()
    return tuple(Dp), tuple(Dm), lap


# -- numerical Hamiltonian ---------------------------------------------------


@dataclass
class HamiltonianTerms:
    """Numerical Hamiltonian and its derivatives at one ``u``.

    ``a``/``b`` are the first derivatives in ``p+``/``p-`` per axis. The rest
    is what the second derivatives are built from:

        da_k/dp+_j = 4 g'' q_k q_j + 2 g' [j == k] 1{p+_k < 0}
        da_k/dp-_j = 4 g'' q_k r_j
        db_k/dp+_j = 4 g'' r_k q_j
        db_k/dp-_j = 4 g'' r_k r_j + 2 g' [j == k] 1{p-_k > 0}

    with ``q = min(p+, 0)`` and ``r = max(p-, 0)``.
    """

    H: np.ndarray
    a: list
    b: list
    q: list
    r: list
    g1: np.ndarray
    g2: np.ndarray

    @property
    def speed(self) -> float:
        """``max |H_p|`` of the upwind coefficients."""
        return float(np.max(sum(bk - ak for ak, bk in zip(self.a, self.b))))


def numerical_hamiltonian(problem: MFGProblem, u: np.ndarray) -> HamiltonianTerms:
    grid = problem.grid
    g, g1f, g2f = radial_profile(problem.hamiltonian.family)
    s = 0.0
    q, r = [], []
    for k in range(grid.d):
        qk = np.minimum(_fwd(u, grid.h, k), 0.0)
        rk = np.maximum(_bwd(u, grid.h, k), 0.0)
        q.append(qk)
        r.append(rk)
        s = s + qk * qk + rk * rk
    g1 = g1f(s)
    H = g(s) + problem.potential_values
    a = [2.0 * g1 * qk for qk in q]
    b = [2.0 * g1 * rk for rk in r]
    return HamiltonianTerms(H, a, b, q, r, g1, g2f(s))


def transport(a, b, phi: np.ndarray, h: float) -> np.ndarray:
    """``sum_k a_k D+_k phi + b_k D-_k phi``."""
    out = np.zeros_like(phi)
    for k, (ak, bk) in enumerate(zip(a, b)):
        out = out + ak * _fwd(phi, h, k) + bk * _bwd(phi, h, k)
    return out


def transport_adjoint(a, b, psi: np.ndarray, h: float) -> np.ndarray:
    """Exact transpose of :func:`transport` in the discrete inner product."""
    out = np.zeros_like(psi)
    for k, (ak, bk) in enumerate(zip(a, b)):
        out = out - _bwd(ak * psi, h, k) - _fwd(bk * psi, h, k)
    return out


def _drift_coefficients(components) -> tuple[list, list]:
    """Upwind split of a given drift ``V``: ``a = min(V, 0)``, ``b = max(V, 0)``."""
    a = [np.minimum(c, 0.0) for c in components]
    b = [np.maximum(c, 0.0) for c in components]
    return a, b


# -- step systems ------------------------------------------------------------


def _zero_coeffs(grid: Grid):
    z = np.zeros(grid.shape)
    return [z] * grid.d, [z] * grid.d


def step_matrix(grid: Grid, c0: float, kdt: float, dt: float, a, b) -> sp.csr_matrix:
    """Sparse ``c0 I - kdt Lap + dt T`` for upwind coefficients ``a``, ``b``."""
    Dp, Dm, lap = difference_matrices(grid)
    J = c0 * sp.identity(grid.size, format="csr") - kdt * lap
    for k in range(grid.d):
        J = J + dt * (sp.diags(np.ravel(a[k])) @ Dp[k] + sp.diags(np.ravel(b[k])) @ Dm[k])
    return J.tocsr()


def _solve_step(grid, c0, kdt, dt, a, b, rhs, transpose=False):
    """Solve ``(c0 I - kdt Lap + dt T) x = rhs`` (or its transpose)."""
    h = grid.h
    if grid.d == 1:
        a0, b0 = a[0], b[0]
        diag = c0 + 2.0 * kdt / h**2 + dt * (b0 - a0) / h
        upper = -kdt / h**2 + dt * a0 / h
        lower = -kdt / h**2 - dt * b0 / h
        n = grid.n
        diag = diag * np.ones(n) if np.ndim(diag) == 0 else diag
        upper = upper * np.ones(n) if np.ndim(upper) == 0 else upper
        lower = lower * np.ones(n) if np.ndim(lower) == 0 else lower
        if transpose:
            upper, lower = (
                np.concatenate([lower[1:], lower[:1]]),
                np.concatenate([upper[-1:], upper[:-1]]),
            )
        return solve_periodic_tridiagonal(lower, diag, upper, rhs)
    J = step_matrix(grid, c0, kdt, dt, a, b)
    if transpose:
        J = J.T
    with np.errstate(all="raise"):
        try:
            x = spsolve(J.tocsc(), np.ravel(rhs))
        except (FloatingPointError, RuntimeError) as exc:
            raise SingularSystemError(f"sparse step solve failed: {exc}") from exc
    return np.asarray(x).reshape(grid.shape)


def _check_frame(values: np.ndarray, what: str, frame: int) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericalBlowupError(f"{what} produced non-finite values", frame)


# -- HJB / FP sweeps (array level) --------------------------------------------


def _validate_scheme(scheme: str) -> None:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown time scheme {scheme!r}; choose from {SCHEMES}")


def _hjb_sweep(problem, F_frames, terminal, tg, scheme, discount=0.0):
    """Backward sweep; ``F_frames[n+1]`` is the source used in step ``n``.

    Returns the ``u`` frames and, per step ``n``, the upwind coefficients
    ``(a, b)`` of the linearization that the matching Fokker-Planck step
    ``n -> n+1`` must use.
    """
    grid, dt, kappa = problem.grid, tg.dt, problem.kappa
    c0, kdt = 1.0 + discount * dt, kappa * dt
    h = grid.h
    frames = np.empty((tg.Nt + 1, *grid.shape))
    frames[-1] = terminal
    coeffs = [None] * tg.Nt
    u_next = frames[-1]
    for n in range(tg.Nt - 1, -1, -1):
        F = F_frames[n + 1]
        if scheme == "implicit":
            u_n, lin = _implicit_step(problem, u_next, F, c0, kdt, dt, n)
            coeffs[n] = (lin.a, lin.b)
        else:
            ht = numerical_hamiltonian(problem, u_next)
            # increment form: the step matrix only acts on the change, which
            # keeps round-off proportional to the change itself
            R = _hjb_residual(u_next, u_next, ht, F, c0, kdt, dt, h)
            if scheme == "imex":
                tg.check_cfl(grid, ht.speed)
                u_n = u_next + _solve_step(grid, c0, kdt, 0.0, *_zero_coeffs(grid), R)
            else:
                u_n = u_next + _solve_step(grid, c0, kdt, dt, ht.a, ht.b, R)
            coeffs[n] = (ht.a, ht.b)
        _check_frame(u_n, "HJB step", n)
        frames[n] = u_n
        u_next = u_n
    return frames, coeffs


def _hjb_residual(x, u_next, ht, F, c0, kdt, dt, h):
    """``u_next + dt (F - H(x)) - (c0 x - kdt Lap x)``."""
    return (u_next - c0 * x) + kdt * _lap(x, h) + dt * (F - ht.H)


def _implicit_step(problem, u_next, F, c0, kdt, dt, n):
    grid, h = problem.grid, problem.grid.h
    x = u_next
    for _ in range(_NEWTON_STEP_MAX):
        ht = numerical_hamiltonian(problem, x)
        R = _hjb_residual(x, u_next, ht, F, c0, kdt, dt, h)
        step = _solve_step(grid, c0, kdt, dt, ht.a, ht.b, R)
        x = x + step
        _check_frame(x, "implicit HJB Newton iterate", n)
        if float(np.max(np.abs(step))) <= _NEWTON_STEP_TOL * (1.0 + float(np.max(np.abs(x)))):
            return x, numerical_hamiltonian(problem, x)
    raise ConvergenceError(f"implicit HJB step {n} did not converge")


def _fp_sweep(problem, coeffs, m0, tg, scheme):
    grid, dt, kdt = problem.grid, tg.dt, problem.kappa * tg.dt
    vol = grid.cell_volume
    frames = np.empty((tg.Nt + 1, *grid.shape))
    frames[0] = m0
    mass0 = vol * float(np.sum(m0))
    m = frames[0]
    for n in range(tg.Nt):
        a, b = coeffs[n]
        if scheme == "imex":
            tg.check_cfl(grid, float(np.max(sum(bk - ak for ak, bk in zip(a, b)))))
            m = m + _solve_step(grid, 1.0, kdt, 0.0, *_zero_coeffs(grid), kdt * _lap(m, grid.h))
            m = m - dt * transport_adjoint(a, b, m, grid.h)
        else:
            R = kdt * _lap(m, grid.h) - dt * transport_adjoint(a, b, m, grid.h)
            m = m + _solve_step(grid, 1.0, kdt, dt, a, b, R, transpose=True)
        _check_frame(m, "Fokker-Planck step", n + 1)
        mass = vol * float(np.sum(m))
        if abs(mass - mass0) > MASS_TOL:
            raise MassConservationError(
                f"mass drifted to {mass:.17g} (from {mass0:.17g}) at frame {n + 1}"
            )
        low = float(np.min(m))
        if low < -POSITIVITY_TOL:
            raise PositivityError(f"density reached {low:.3e} at frame {n + 1}")
        frames[n + 1] = m
    return frames


def _coefficients_from_path(problem, u_frames, scheme):
    """Per-step upwind coefficients consistent with ``scheme``."""
    Nt = u_frames.shape[0] - 1
    out = []
    for n in range(Nt):
        lin = u_frames[n] if scheme == "implicit" else u_frames[n + 1]
        ht = numerical_hamiltonian(problem, lin)
        out.append((ht.a, ht.b))
    return out


def coupling_frames(problem: MFGProblem, m_frames: np.ndarray, shift: float = 0.0):
    F, _ = coupling_arrays(problem.coupling, problem.f0_values, m_frames)
    return F - shift


# -- public path kernels -----------------------------------------------------


def _as_frames(path: PathField, problem: MFGProblem, tg: TimeGrid) -> np.ndarray:
    _check_same_grid(path.grid, problem.grid)
    if path.time_grid != tg:
        raise GridError(f"path time grid {path.time_grid} differs from {tg}")
    return path.frames


def hjb_backward_path(
    problem: MFGProblem,
    m_path: PathField,
    tg: TimeGrid,
    *,
    scheme: str = "linearized",
    discount: float = 0.0,
    shift: float = 0.0,
    terminal: Field | None = None,
) -> PathField:
    """Solve ``-u_t + delta u - kappa Lap u + H(x, Du) = F(x, m) - shift``.

    Args:
        problem: model data; ``u(T)`` comes from its terminal spec unless
            ``terminal`` overrides it.
        m_path: density frames feeding the coupling.
        tg: time grid shared with ``m_path``.
        scheme: one of ``SCHEMES``.
        discount: ``delta >= 0``.
        shift: constant subtracted from the coupling (used to solve for
            ``u - lambda (T - t)`` directly).
        terminal: optional terminal field.

    Raises:
        NumericalBlowupError: a frame became non-finite.
        CFLError: ``scheme="imex"`` with a step above the transport bound.
    """
    _validate_scheme(scheme)
    m = _as_frames(m_path, problem, tg)
    if np.min(m) < -POSITIVITY_TOL:
        raise ValueError("m_path must be nonnegative")
    uT = problem.terminal_values if terminal is None else terminal.values
    F = coupling_frames(problem, m, shift)
    frames, _ = _hjb_sweep(problem, F, uT, tg, scheme, discount)
    return PathField(tg, problem.grid, frames)


def fp_forward_path(
    problem: MFGProblem,
    u_path: PathField,
    tg: TimeGrid,
    m0: Field | None = None,
    *,
    scheme: str = "linearized",
) -> PathField:
    """Transport ``m0`` forward with the drift of ``u_path``.

    The step operator is the transpose of the HJB step linearization, so each
    frame keeps unit mass and stays nonnegative.

    Raises:
        MassConservationError: mass drifted by more than ``1e-12``.
        PositivityError: a density value fell below ``-1e-12``.
    """
    _validate_scheme(scheme)
    u = _as_frames(u_path, problem, tg)
    m0 = problem.m0 if m0 is None else m0
    _check_same_grid(m0.grid, problem.grid)
    if np.min(m0.values) < 0:
        raise ValueError("m0 must be nonnegative")
    coeffs = _coefficients_from_path(problem, u, scheme)
    frames = _fp_sweep(problem, coeffs, m0.values, tg, scheme)
    return PathField(tg, problem.grid, frames)


# -- linear kernels ----------------------------------------------------------

Drift = Union[VectorField, Sequence[VectorField], Callable[[float], VectorField]]


def _drift_at(V: Drift | None, grid: Grid, tg: TimeGrid, n: int):
    if V is None:
        return _zero_coeffs(grid)
    if callable(V) and not isinstance(V, VectorField):
        V = V(float(tg.times[n]))
    elif not isinstance(V, VectorField):
        V = V[n]
    _check_same_grid(V.grid, grid)
    return _drift_coefficients(V.components)


def _flux_at(Fflux, grid: Grid, tg: TimeGrid, n: int):
    if Fflux is None:
        return None
    if callable(Fflux) and not isinstance(Fflux, VectorField):
        Fflux = Fflux(float(tg.times[n]))
    elif not isinstance(Fflux, VectorField):
        Fflux = Fflux[n]
    _check_same_grid(Fflux.grid, grid)
    return Fflux.components


def linear_parabolic_backward(
    V: Drift | None,
    f: PathField | None,
    v_T: Field,
    tg: TimeGrid,
    kappa: float = 1.0,
) -> PathField:
    """Backward implicit solve of ``-v_t - kappa Lap v + V . Dv = f``.

    ``V`` may be a constant :class:`VectorField`, a sequence of ``Nt + 1``
    of them, or a callable of time. Step ``n`` uses ``V(t_n)``, ``f(t_n)``.
    """
    grid = v_T.grid
    frames = np.empty((tg.Nt + 1, *grid.shape))
    frames[-1] = v_T.values
    kdt = kappa * tg.dt
    for n in range(tg.Nt - 1, -1, -1):
        a, b = _drift_at(V, grid, tg, n)
        rhs = frames[n + 1] if f is None else frames[n + 1] + tg.dt * f.frames[n]
        frames[n] = _solve_step(grid, 1.0, kdt, tg.dt, a, b, rhs)
        _check_frame(frames[n], "linear backward step", n)
    return PathField(tg, grid, frames)


def linear_fp_forward(
    V: Drift | None,
    Fflux,
    rho0: Field,
    tg: TimeGrid,
    kappa: float = 1.0,
) -> PathField:
    """Forward solve of ``rho_t - kappa Lap rho - div(rho V) = div(F)``.

    Step ``n -> n+1`` is the transpose of the backward step ``n`` of
    :func:`linear_parabolic_backward` (drift ``V(t_n)``), with the flux
    ``F(t_{n+1})`` entering through the backward-difference divergence.

    Raises:
        MassConservationError: ``integrate(rho)`` drifted by more than
            ``1e-12`` (scaled by ``max(1, ||rho0||_1)``).
    """
    grid = rho0.grid
    vol = grid.cell_volume
    frames = np.empty((tg.Nt + 1, *grid.shape))
    frames[0] = rho0.values
    mean0 = vol * float(np.sum(rho0.values))
    tol = MASS_TOL * max(1.0, vol * float(np.sum(np.abs(rho0.values))))
    kdt = kappa * tg.dt
    for n in range(tg.Nt):
        a, b = _drift_at(V, grid, tg, n)
        rho = frames[n]
        R = kdt * _lap(rho, grid.h) - tg.dt * transport_adjoint(a, b, rho, grid.h)
        flux = _flux_at(Fflux, grid, tg, n + 1)
        if flux is not None:
            R = R + tg.dt * sum(_bwd(c, grid.h, k) for k, c in enumerate(flux))
        frames[n + 1] = rho + _solve_step(grid, 1.0, kdt, tg.dt, a, b, R, transpose=True)
        _check_frame(frames[n + 1], "linear forward step", n + 1)
        drift = abs(vol * float(np.sum(frames[n + 1])) - mean0)
        if drift > tol:
            raise MassConservationError(f"mean drifted by {drift:.3e} at frame {n + 1}")
    return PathField(tg, grid, frames)


def adjointness_check(
    drift: VectorField,
    trials: int = 10,
    seed: int = 0,
    *,
    grid: Grid | None = None,
    kappa: float = 1.0,
    dt: float = 1e-2,
) -> float:
    """Worst relative defect of the HJB/FP transpose pairing.

    For random ``phi``, ``psi`` this compares ``<A phi, psi>`` with
    ``<phi, A* psi>`` where ``A = -kappa Lap + T_V`` is the linearized HJB
    operator and ``A*`` its Fokker-Planck counterpart, evaluated through the
    independent divergence formula. The same test is applied to the implicit
    step solves, ``<J^-1 phi, psi>`` against ``<phi, J^-T psi>``.

    Raises:
        GridError: ``grid`` is given and differs from the drift's grid.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    g = drift.grid
    if grid is not None:
        _check_same_grid(grid, g)
    a, b = _drift_coefficients(drift.components)
    rng = np.random.default_rng(seed)
    vol = g.cell_volume

    def ip(x, y):
        return vol * float(np.sum(x * y))

    def l2(x):
        return math.sqrt(ip(x, x))

    worst = 0.0
    for _ in range(trials):
        phi = rng.standard_normal(g.shape)
        psi = rng.standard_normal(g.shape)
        A_phi = -kappa * _lap(phi, g.h) + transport(a, b, phi, g.h)
        At_psi = -kappa * _lap(psi, g.h) + transport_adjoint(a, b, psi, g.h)
        scale = l2(A_phi) * l2(psi) + l2(phi) * l2(At_psi)
        worst = max(worst, abs(ip(A_phi, psi) - ip(phi, At_psi)) / scale)

        x = _solve_step(g, 1.0, kappa * dt, dt, a, b, phi)
        y = _solve_step(g, 1.0, kappa * dt, dt, a, b, psi, transpose=True)
        scale = l2(x) * l2(psi) + l2(phi) * l2(y)
        worst = max(worst, abs(ip(x, psi) - ip(phi, y)) / scale)
    return worst


def fit_decay(
    path: PathField,
    *,
    backward: bool = False,
    kind: str = "L2",
    subtract_mean: bool = False,
    floor: float = 1e-13,
) -> LinearKernelReport:
    """Fit ``||path||`` against elapsed time (``T - t`` when ``backward``)."""
    vals = path.frames
    if subtract_mean:
        axes = tuple(range(1, vals.ndim))
        vals = vals - np.mean(vals, axis=axes, keepdims=True)
    axes = tuple(range(1, vals.ndim))
    if kind == "L2":
        norms = np.sqrt(path.grid.cell_volume * np.sum(vals**2, axis=axes))
    elif kind == "sup":
        norms = np.max(np.abs(vals), axis=axes)
    else:
        raise ValueError(f"unknown norm {kind!r}")
    s = path.times
    if backward:
        s, norms = path.time_grid.T - s[::-1], norms[::-1]
    fit = fit_exponential(s, norms, "one_sided", floor=floor)
    return LinearKernelReport(fit.rate, fit.M, fit.residual, fit.n_points)
