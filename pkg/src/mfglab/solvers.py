"""
Coupled solvers: finite horizon, stationary ergodic and discounted, the
linearized theta system, truncated infinite horizon and discounted evolution.

Evolutive systems are solved by damped Picard iteration on the density path
(``m -> u = HJB(m) -> m_hat = FP(u)``). Stationary systems are solved by
Newton's method on the discrete equations with an analytic sparse Jacobian.
Both use the same numerical Hamiltonian and transport operator as the
kernels, so a stationary solution is an exact fixed point of the discrete
time stepping for any ``dt`` (linearized and implicit schemes).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, splu

from .errors import ConvergenceError, MFGLabError, SingularSystemError
from .fitting import ExpFit, InsufficientDataError, fit_exponential
from .grid import Field, Grid, _bwd, _check_same_grid, _fwd, _lap
from .kernels import (
    SCHEMES,
    PathField,
    TimeGrid,
    _fp_sweep,
    _hjb_sweep,
    coupling_frames,
    difference_matrices,
    numerical_hamiltonian,
    transport,
    transport_adjoint,
)
from .models import DENSITY_FLOOR, coupling_arrays
from .problem import MFGProblem

__all__ = [
    "MFGProblem",
    "SolverConfig",
    "FiniteHorizonSolution",
    "ErgodicSolution",
    "DiscountedSolution",
    "ThetaSolution",
    "InfiniteHorizonSolution",
    "DiscountedEvolution",
    "solve_finite_horizon",
    "solve_ergodic",
    "solve_discounted_stationary",
    "solve_theta",
    "solve_infinite_horizon",
    "solve_discounted_evolution",
    "distance_profile",
    "estimate_decay_rate",
    "default_truncation",
    "theta_identity",
]

_MIN_DAMPING = 1.0 / 64.0
_DENSE_COND_LIMIT = 3000


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls shared by every solver.

    Attributes:
        damping: Picard relaxation ``lambda`` in ``(0, 1]``.
        tol: Picard stopping level for ``lambda * sup_t ||m_hat - m||_sup``.
        max_iters: Picard iteration cap.
        time_scheme: one of ``"linearized"``, ``"implicit"``, ``"imex"``.
        adaptive_damping: halve ``lambda`` whenever the fixed-point defect
            grows (down to 1/64).
        fictitious_play: use ``lambda_k = 1/k`` instead of a fixed damping.
        dt: target time step.
        newton_tol: stationary Newton stopping level on the sup residual.
        newton_max_iters: Newton iteration cap.
        fallback_longtime: let ``solve_ergodic`` fall back to the long-time
            method when Newton fails.
        longtime_T: horizon of the long-time method (default ``40 / kappa``).
    """

    damping: float = 0.5
    tol: float = 1e-8
    max_iters: int = 400
    time_scheme: str = "linearized"
    adaptive_damping: bool = True
    fictitious_play: bool = False
    dt: float = 0.01
    newton_tol: float = 1e-10
    newton_max_iters: int = 60
    fallback_longtime: bool = True
    longtime_T: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1 or self.newton_max_iters < 1:
            raise ValueError("iteration caps must be positive")
        if self.time_scheme not in SCHEMES:
            raise ValueError(f"time_scheme must be one of {SCHEMES}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def with_(self, **changes) -> SolverConfig:
        return replace(self, **changes)


# -- solution containers -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiniteHorizonSolution:
    """Converged Picard pair.

    ``u_path`` solves the HJB equation with coupling ``F - shift``; add
    ``shift * (T - t)`` (see :meth:`unshifted_u`) to recover ``u`` itself.
    """

    u_path: PathField
    m_path: PathField
    iterations: int
    residual: float
    hjb_residual: float
    sup_m: float
    sup_du: float
    history: tuple = ()
    shift: float = 0.0
    discount: float = 0.0
    damping: float = 0.5

    @property
    def time_grid(self) -> TimeGrid:
        return self.u_path.time_grid

    @property
    def grid(self) -> Grid:
        return self.u_path.grid

    def unshifted_u(self) -> PathField:
        tg = self.time_grid
        return self.u_path.shifted(-self.shift * (tg.T - tg.times))


@dataclass(frozen=True, eq=False)
class ErgodicSolution:
    lam: float
    u_bar: Field
    m_bar: Field
    residual_hjb: float
    residual_fp: float
    method: str = "newton"
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class DiscountedSolution:
    delta: float
    u_bar: Field
    m_bar: Field
    residual_hjb: float
    residual_fp: float
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class ThetaSolution:
    theta: float
    w: Field
    rho: Field
    residual: float
    condition: float = float("nan")


@dataclass(frozen=True, eq=False)
class InfiniteHorizonSolution:
    """Truncated solution of the ``v``-system on ``[0, T_trunc]``.

    ``v`` solves the HJB equation with coupling ``F - lambda_bar`` and
    terminal value ``u_bar + anchor``; ``tail_average`` is ``integrate(v(t))``
    per frame and ``c_bar`` its mean over the last 10% of frames.
    """

    v_path: PathField
    mu_path: PathField
    tail_average: np.ndarray
    c_bar: float
    tail_flat: bool
    tail_jump: float
    anchor: float
    finite: FiniteHorizonSolution


@dataclass(frozen=True, eq=False)
class DiscountedEvolution:
    u_path: PathField
    m_path: PathField
    stationary: DiscountedSolution
    times: np.ndarray
    profile: np.ndarray
    fit: Optional[ExpFit]
    finite: FiniteHorizonSolution


# -- finite horizon ----------------------------------------------------------


def _initial_frames(guess, m0: np.ndarray, tg: TimeGrid, grid: Grid) -> np.ndarray:
    if guess is None:
        return np.broadcast_to(m0, (tg.Nt + 1, *grid.shape)).copy()
    if isinstance(guess, PathField):
        _check_same_grid(guess.grid, grid)
        if guess.time_grid != tg:
            raise ValueError("m_guess lives on a different time grid")
        return np.array(guess.frames)
    if isinstance(guess, Field):
        _check_same_grid(guess.grid, grid)
        frames = np.broadcast_to(guess.values, (tg.Nt + 1, *grid.shape)).copy()
        frames[0] = m0
        return frames
    raise TypeError("m_guess must be a PathField or a Field")


def _sup_gradient(frames: np.ndarray, grid: Grid) -> float:
    axes = range(1, grid.d + 1)
    return max(
        float(np.max(np.abs(op(frames, grid.h, ax))))
        for ax in axes
        for op in (_fwd, _bwd)
    )


def solve_finite_horizon(
    problem: MFGProblem,
    T: float,
    cfg: SolverConfig | None = None,
    *,
    m_guess=None,
    m0: Field | None = None,
    terminal: Field | None = None,
    shift: float = 0.0,
    discount: float = 0.0,
) -> FiniteHorizonSolution:
    """Damped Picard iteration for the finite-horizon system on ``[0, T]``.

    Args:
        problem: model data.
        T: horizon.
        cfg: solver controls.
        m_guess: initial density path (a :class:`PathField` or a single
            :class:`Field` used for every frame); defaults to ``m0``.
        m0: initial density override.
        terminal: terminal value override for ``u(T)``.
        shift: constant subtracted from the coupling.
        discount: discount rate in the HJB equation.

    Returns:
        The pair ``(u, m)`` with ``u = HJB(m_k)`` and ``m = FP(u)``.

    Raises:
        ConvergenceError: ``max_iters`` reached; carries the residual history
            and the last iterate.
    """
    cfg = cfg or SolverConfig()
    grid = problem.grid
    tg = TimeGrid.from_step(T, cfg.dt)
    m0 = problem.m0 if m0 is None else m0
    _check_same_grid(m0.grid, grid)
    uT = problem.terminal_values if terminal is None else terminal.values
    scheme = cfg.time_scheme

    m = _initial_frames(m_guess, m0.values, tg, grid)
    lam = cfg.damping
    history: list[float] = []
    prev_defect = math.inf
    u = m_hat = None
    for k in range(1, cfg.max_iters + 1):
        F = coupling_frames(problem, m, shift)
        u, coeffs = _hjb_sweep(problem, F, uT, tg, scheme, discount)
        m_hat = _fp_sweep(problem, coeffs, m0.values, tg, scheme)
        defect = float(np.max(np.abs(m_hat - m)))
        step = 1.0 / k if cfg.fictitious_play else lam
        residual = step * defect
        history.append(residual)
        done = residual <= cfg.tol and (not cfg.fictitious_play or defect <= 10 * cfg.tol)
        if done:
            break
        if cfg.adaptive_damping and not cfg.fictitious_play and defect > prev_defect:
            lam = max(0.5 * lam, _MIN_DAMPING)
        prev_defect = defect
        m = (1.0 - step) * m + step * m_hat
    else:
        raise ConvergenceError(
            f"Picard iteration stopped after {cfg.max_iters} iterations "
            f"with residual {history[-1]:.3e}",
            history=history,
            partial=(PathField(tg, grid, u), PathField(tg, grid, m_hat)),
        )

    F = coupling_frames(problem, m_hat, shift)
    u_check, _ = _hjb_sweep(problem, F, uT, tg, scheme, discount)
    return FiniteHorizonSolution(
        u_path=PathField(tg, grid, u),
        m_path=PathField(tg, grid, m_hat),
        iterations=k,
        residual=history[-1],
        hjb_residual=float(np.max(np.abs(u_check - u))),
        sup_m=float(np.max(m_hat)),
        sup_du=_sup_gradient(u, grid),
        history=tuple(history),
        shift=float(shift),
        discount=float(discount),
        damping=lam,
    )


# -- stationary Newton -------------------------------------------------------


def _transport_matrix(grid, a, b):
    Dp, Dm, _ = difference_matrices(grid)
    return sum(
        sp.diags(np.ravel(a[k])) @ Dp[k] + sp.diags(np.ravel(b[k])) @ Dm[k]
        for k in range(grid.d)
    )


def _density_jacobian(grid, ht, m):
    """Derivative of ``T(u)^T m`` with respect to ``u``."""
    Dp, Dm, _ = difference_matrices(grid)
    d = grid.d
    g1 = np.ravel(ht.g1)
    g2 = np.ravel(ht.g2)
    q = [np.ravel(x) for x in ht.q]
    r = [np.ravel(x) for x in ht.r]
    Mdiag = sp.diags(np.ravel(m))
    total = None
    for k in range(d):
        dA = None
        dB = None
        for j in range(d):
            da_dp = 4.0 * g2 * q[k] * q[j]
            da_dm = 4.0 * g2 * q[k] * r[j]
            db_dp = 4.0 * g2 * r[k] * q[j]
            db_dm = 4.0 * g2 * r[k] * r[j]
            if j == k:
                da_dp = da_dp + 2.0 * g1 * (q[k] < 0)
                db_dm = db_dm + 2.0 * g1 * (r[k] > 0)
            termA = sp.diags(da_dp) @ Dp[j] + sp.diags(da_dm) @ Dm[j]
            termB = sp.diags(db_dp) @ Dp[j] + sp.diags(db_dm) @ Dm[j]
            dA = termA if dA is None else dA + termA
            dB = termB if dB is None else dB + termB
        part = Dp[k].T @ Mdiag @ dA + Dm[k].T @ Mdiag @ dB
        total = part if total is None else total + part
    return total


def _linearized_blocks(problem, u, m, discount):
    """Sparse blocks of the stationary Jacobian at ``(u, m)``."""
    grid = problem.grid
    _, _, lap = difference_matrices(grid)
    ht = numerical_hamiltonian(problem, u)
    _, Fm = coupling_arrays(problem.coupling, problem.f0_values, m, floor=DENSITY_FLOOR)
    Tm = _transport_matrix(grid, ht.a, ht.b)
    N = grid.size
    A11 = discount * sp.identity(N) - problem.kappa * lap + Tm
    A12 = -sp.diags(np.ravel(Fm))
    A21 = _density_jacobian(grid, ht, m)
    A22 = -problem.kappa * lap + Tm.T
    return A11, A12, A21, A22, ht, Fm


def _assemble(problem, u, m, discount, ergodic):
    grid = problem.grid
    N, vol = grid.size, grid.cell_volume
    A11, A12, A21, A22, ht, Fm = _linearized_blocks(problem, u, m, discount)
    ones = sp.csr_matrix(np.ones((N, 1)))
    row = sp.csr_matrix(np.full((1, N), vol))
    if ergodic:
        J = sp.bmat(
            [
                [A11, A12, ones, None],
                [A21, A22, None, ones],
                [row, None, None, None],
                [None, row, None, None],
            ],
            format="csc",
        )
    else:
        J = sp.bmat(
            [[A11, A12, None], [A21, A22, ones], [None, row, None]], format="csc"
        )
    return J, ht, Fm


def _condition_estimate(J) -> float:
    if J.shape[0] <= _DENSE_COND_LIMIT:
        with np.errstate(all="ignore"):
            return float(np.linalg.cond(J.toarray(), 1))
    return float("inf")


def _sparse_solve(J, rhs):
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            lu = splu(J.tocsc())
            x = lu.solve(rhs)
        except (RuntimeError, MatrixRankWarning) as exc:
            raise SingularSystemError(
                f"stationary Jacobian is singular: {exc}", _condition_estimate(J)
            ) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("stationary solve produced non-finite values",
                                  _condition_estimate(J))
    return x


def _stationary_residual(problem, u, m, lam, nu, discount, ergodic):
    grid = problem.grid
    vol = grid.cell_volume
    ht = numerical_hamiltonian(problem, u)
    F, _ = coupling_arrays(problem.coupling, problem.f0_values, m, floor=DENSITY_FLOOR)
    kappa = problem.kappa
    R1 = lam + discount * u - kappa * _lap(u, grid.h) + ht.H - F
    R2 = -kappa * _lap(m, grid.h) + transport_adjoint(ht.a, ht.b, m, grid.h)
    cons = [vol * float(np.sum(m)) - 1.0]
    if ergodic:
        cons = [vol * float(np.sum(u))] + cons
    return R1, R2 + nu, np.array(cons), R2


def _stationary_newton(problem, discount, cfg, ergodic, u_init=None, m_init=None):
    grid = problem.grid
    N, shape = grid.size, grid.shape
    m = np.ones(shape) if m_init is None else np.array(m_init, dtype=float)
    F0, _ = coupling_arrays(problem.coupling, problem.f0_values, m, floor=DENSITY_FLOOR)
    if u_init is not None:
        u = np.array(u_init, dtype=float)
    elif ergodic:
        u = np.zeros(shape)
    else:
        u = np.full(shape, float(np.mean(F0)) / discount)
    lam = float(np.mean(F0)) if ergodic else 0.0
    nu = 0.0

    def pack_norm(parts):
        return max(float(np.max(np.abs(p))) for p in parts)

    R1, R2, C, _ = _stationary_residual(problem, u, m, lam, nu, discount, ergodic)
    res = pack_norm((R1, R2, C))
    history = [res]
    for it in range(1, cfg.newton_max_iters + 1):
        if res <= cfg.newton_tol:
            break
        J, _, _ = _assemble(problem, u, m, discount, ergodic)
        rhs = -np.concatenate([np.ravel(R1), np.ravel(R2), C])
        dz = _sparse_solve(J, rhs)
        du = dz[:N].reshape(shape)
        dm = dz[N:2 * N].reshape(shape)
        dlam = dz[2 * N] if ergodic else 0.0
        dnu = dz[-1]
        t = 1.0
        while True:
            cand = (u + t * du, m + t * dm, lam + t * dlam, nu + t * dnu)
            R1c, R2c, Cc, _ = _stationary_residual(problem, *cand, discount, ergodic)
            res_c = pack_norm((R1c, R2c, Cc))
            if res_c <= (1.0 - 1e-4 * t) * res or t < 1.0 / 1024:
                break
            t *= 0.5
        u, m, lam, nu = cand
        R1, R2, C = R1c, R2c, Cc
        floor = 1e3 * np.finfo(float).eps * _residual_scale(problem, u)
        stalled = (t == 1.0 and float(np.max(np.abs(dz))) <= 1e-13 * (
            1.0 + float(np.max(np.abs(u)))
        )) or (res_c <= floor and res_c > 0.5 * res)
        res = res_c
        history.append(res)
        if stalled:
            break
    # below newton_tol, or stalled at the round-off level of the stencil
    if res > max(cfg.newton_tol, 1e3 * np.finfo(float).eps * _residual_scale(problem, u)):
        raise ConvergenceError(
            f"stationary Newton stopped at residual {res:.3e}", history=history,
            partial=(u, m, lam),
        )
    _, _, _, R2raw = _stationary_residual(problem, u, m, lam, nu, discount, ergodic)
    return u, m, lam, float(np.max(np.abs(R1))), float(np.max(np.abs(R2raw))), len(history) - 1


def _residual_scale(problem, u) -> float:
    """Size of the largest term in the HJB residual (round-off reference)."""
    grid = problem.grid
    return 1.0 + problem.kappa * 4 * grid.d / grid.h**2 * float(np.max(np.abs(u)))


def solve_ergodic(
    problem: MFGProblem, method: str = "newton", cfg: SolverConfig | None = None
) -> ErgodicSolution:
    """Stationary ergodic triple ``(lambda_bar, u_bar, m_bar)``.

    ``"newton"`` solves the discrete stationary equations with constraints
    ``integrate(u_bar) = 0`` and ``integrate(m_bar) = 1``. ``"longtime"``
    solves the finite-horizon problem on ``[0, longtime_T]`` and reads off
    ``m_bar`` and ``u_bar`` at mid-horizon and ``lambda_bar`` from the slope
    of ``t -> integrate(u(t))`` over the middle third.

    Raises:
        ConvergenceError: Newton failed and no fallback was allowed.
        SingularSystemError: singular Jacobian (with a condition estimate).
    """
    cfg = cfg or SolverConfig()
    if method == "newton":
        try:
            u, m, lam, r1, r2, its = _stationary_newton(problem, 0.0, cfg, True)
        except (ConvergenceError, SingularSystemError):
            if not cfg.fallback_longtime:
                raise
            return solve_ergodic(problem, "longtime", cfg)
        grid = problem.grid
        return ErgodicSolution(lam, Field(grid, u), Field(grid, m), r1, r2, "newton", its)
    if method != "longtime":
        raise ValueError(f"unknown ergodic method {method!r}")

    T = cfg.longtime_T if cfg.longtime_T is not None else 40.0 / problem.kappa
    sol = solve_finite_horizon(problem, T, cfg)
    tg, grid = sol.time_grid, problem.grid
    times = tg.times
    mid = tg.Nt // 2
    third = (times >= T / 3.0) & (times <= 2.0 * T / 3.0)
    slope = np.polyfit(times[third], sol.u_path.integrals()[third], 1)[0]
    u_mid = sol.u_path.frames[mid]
    vol = grid.cell_volume
    u_bar = u_mid - vol * np.sum(u_mid)
    m_bar = sol.m_path.frames[mid]
    lam = -float(slope)
    R1, _, _, R2 = _stationary_residual(problem, u_bar, m_bar, lam, 0.0, 0.0, True)
    return ErgodicSolution(
        lam, Field(grid, u_bar), Field(grid, m_bar),
        float(np.max(np.abs(R1))), float(np.max(np.abs(R2))), "longtime", sol.iterations,
    )


def solve_discounted_stationary(
    problem: MFGProblem, delta: float, cfg: SolverConfig | None = None
) -> DiscountedSolution:
    """Stationary discounted pair ``(u_delta, m_delta)`` with unit mass.

    Raises:
        ValueError: ``delta <= 0``.
        ConvergenceError: Newton failed.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    cfg = cfg or SolverConfig()
    u, m, _, r1, r2, its = _stationary_newton(problem, float(delta), cfg, False)
    grid = problem.grid
    return DiscountedSolution(float(delta), Field(grid, u), Field(grid, m), r1, r2, its)


def solve_theta(
    problem: MFGProblem, erg: ErgodicSolution, cfg: SolverConfig | None = None
) -> ThetaSolution:
    """Linearized ergodic system selecting the vanishing-discount constant.

    Solves, with ``integrate(w) = integrate(rho) = 0``,

        theta + u_bar - kappa Lap w + H_p(Du_bar).Dw = F_m(m_bar) rho
        -kappa Lap rho - div(rho H_p(Du_bar)) - div(m_bar H_pp(Du_bar) Dw) = 0

    in its discrete form (the ergodic Newton Jacobian at ``(u_bar, m_bar)``).

    Raises:
        SingularSystemError: the saddle system is singular; the error carries
            a condition estimate.
    """
    grid = problem.grid
    _check_same_grid(erg.u_bar.grid, grid)
    N = grid.size
    u, m = erg.u_bar.values, erg.m_bar.values
    if np.min(m) < DENSITY_FLOOR:
        raise ValueError("m_bar must stay above the density floor")
    J, ht, Fm = _assemble(problem, u, m, 0.0, True)
    rhs = np.concatenate([-np.ravel(u), np.zeros(N), [0.0, 0.0]])
    z = _sparse_solve(J, rhs)
    residual = float(np.max(np.abs(J @ z - rhs)))
    w = z[:N].reshape(grid.shape)
    rho = z[N:2 * N].reshape(grid.shape)
    cond = _condition_estimate(J)
    return ThetaSolution(float(z[2 * N]), Field(grid, w), Field(grid, rho), residual, cond)


def theta_identity(problem: MFGProblem, erg: ErgodicSolution, th: ThetaSolution) -> float:
    """``integrate(F_m(m_bar) rho - u_bar - H_p . Dw)``, which must equal theta."""
    grid = problem.grid
    ht = numerical_hamiltonian(problem, erg.u_bar.values)
    _, Fm = coupling_arrays(problem.coupling, problem.f0_values, erg.m_bar.values,
                            floor=DENSITY_FLOOR)
    integrand = Fm * th.rho.values - erg.u_bar.values - transport(ht.a, ht.b, th.w.values, grid.h)
    return grid.cell_volume * float(np.sum(integrand))


# -- long-time helpers -------------------------------------------------------


def distance_profile(u_frames, m_frames, u_ref, m_ref, grid: Grid) -> np.ndarray:
    """``||m(t) - m_ref||_sup + ||Du(t) - Du_ref||_sup`` per frame.

    The gradient distance is the largest one-sided difference over both
    directions and all axes.
    """
    axes = tuple(range(1, grid.d + 1))
    dm = np.max(np.abs(m_frames - m_ref), axis=axes)
    diff = u_frames - u_ref
    du = np.zeros_like(dm)
    for ax in range(1, grid.d + 1):
        for op in (_fwd, _bwd):
            du = np.maximum(du, np.max(np.abs(op(diff, grid.h, ax)), axis=axes))
    return dm + du


def estimate_decay_rate(
    problem: MFGProblem,
    erg: ErgodicSolution,
    cfg: SolverConfig | None = None,
    *,
    T0: float | None = None,
    target: float = 20.0,
    max_doublings: int = 6,
) -> float:
    """Coarse turnpike rate: double ``T`` until ``omega * T >= target``."""
    cfg = cfg or SolverConfig()
    T = T0 if T0 is not None else 1.0 / problem.kappa
    omega = float("nan")
    for _ in range(max_doublings + 1):
        sol = solve_finite_horizon(problem, T, cfg, shift=erg.lam, m_guess=erg.m_bar)
        d = distance_profile(sol.u_path.frames, sol.m_path.frames,
                             erg.u_bar.values, erg.m_bar.values, problem.grid)
        t = sol.u_path.times
        mid = d[(t >= T / 3) & (t <= 2 * T / 3)]
        floor = max(1e-13, 10.0 * float(np.median(mid)))
        try:
            fit = fit_exponential(t, d, "two_sided_free", T=T, floor=floor)
            omega = fit.rate
        except InsufficientDataError:
            omega = float("nan")
        if np.isfinite(omega) and omega > 0 and omega * T >= target:
            return omega
        T *= 2.0
    if np.isfinite(omega) and omega > 0:
        return omega
    raise ConvergenceError("could not estimate a turnpike rate")


def default_truncation(omega: float) -> float:
    """Horizon with ``exp(-omega T) <= 1e-8`` and ``T >= 10 / omega``."""
    return max(math.log(1e8) / omega, 10.0 / omega)


def solve_infinite_horizon(
    problem: MFGProblem,
    T_trunc: float | None,
    erg: ErgodicSolution,
    cfg: SolverConfig | None = None,
    *,
    anchor: float = 0.0,
    omega: float | None = None,
) -> InfiniteHorizonSolution:
    """Truncated ``v``-system anchored at ``v(T_trunc) = u_bar + anchor``.

    With ``T_trunc=None`` the horizon comes from :func:`default_truncation`
    applied to ``omega`` (estimated when not given).
    """
    cfg = cfg or SolverConfig()
    if T_trunc is None:
        omega = omega or estimate_decay_rate(problem, erg, cfg)
        T_trunc = default_truncation(omega)
    terminal = Field(problem.grid, erg.u_bar.values + anchor)
    sol = solve_finite_horizon(problem, T_trunc, cfg, terminal=terminal, shift=erg.lam,
                               m_guess=erg.m_bar)
    a = sol.u_path.integrals()
    Nt = sol.time_grid.Nt
    tail = a[int(math.floor(0.9 * Nt)):]
    i90 = int(round(0.9 * Nt))
    jump = abs(a[i90] - a[-1])
    return InfiniteHorizonSolution(
        v_path=sol.u_path,
        mu_path=sol.m_path,
        tail_average=a,
        c_bar=float(np.mean(tail)),
        tail_flat=bool(jump <= 10.0 * cfg.tol),
        tail_jump=float(jump),
        anchor=float(anchor),
        finite=sol,
    )


def solve_discounted_evolution(
    problem: MFGProblem,
    delta: float,
    T_trunc: float,
    cfg: SolverConfig | None = None,
    *,
    stationary: DiscountedSolution | None = None,
) -> DiscountedEvolution:
    """Discounted evolution on ``[0, T_trunc]`` anchored at ``u(T_trunc) = u_delta``.

    The diagnostics carry the profile
    ``||m(t) - m_delta||_sup + ||Du(t) - Du_delta||_sup`` and, when enough of
    it sits above the noise floor, a one-sided exponential fit of it.
    """
    cfg = cfg or SolverConfig()
    st = stationary or solve_discounted_stationary(problem, delta, cfg)
    sol = solve_finite_horizon(problem, T_trunc, cfg, terminal=st.u_bar, discount=delta,
                               m_guess=st.m_bar)
    prof = distance_profile(sol.u_path.frames, sol.m_path.frames,
                            st.u_bar.values, st.m_bar.values, problem.grid)
    times = sol.u_path.times
    fit = None
    try:
        # leave out the terminal layer, where the anchor pins the profile
        keep = times <= 0.5 * T_trunc
        fit = fit_exponential(times[keep], prof[keep], "one_sided")
    except InsufficientDataError:
        fit = None
    return DiscountedEvolution(sol.u_path, sol.m_path, st, times, prof, fit, sol)
