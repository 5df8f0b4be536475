"""
Periodic (cyclic) tridiagonal solves.

Row ``i`` of the system reads::

    lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1] = rhs[i]

with indices taken modulo ``n``. The two corner entries are removed by a
rank-one Sherman-Morrison correction, leaving an ordinary tridiagonal
system that LAPACK's ``gtsv`` handles.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg.lapack import dgtsv

from .errors import SingularSystemError

__all__ = ["solve_periodic_tridiagonal", "periodic_tridiagonal_matvec"]


def periodic_tridiagonal_matvec(lower, diag, upper, x):
    return lower * np.roll(x, 1) + diag * x + upper * np.roll(x, -1)


def solve_periodic_tridiagonal(lower, diag, upper, rhs):
    """Solve the cyclic system for ``rhs`` of shape ``(n,)`` or ``(n, k)``."""
    n = diag.shape[0]
    rhs = np.asarray(rhs, dtype=float)
    single = rhs.ndim == 1
    if single:
        rhs = rhs[:, None]

    gamma = -diag[0]
    d = np.array(diag, dtype=float)
    d[0] = diag[0] - gamma
    d[-1] = diag[-1] - lower[0] * upper[-1] / gamma
    corr = np.zeros(n)
    corr[0] = gamma
    corr[-1] = upper[-1]
    b = np.column_stack([rhs, corr])
    _, _, _, sol, info = dgtsv(
        np.array(lower[1:], dtype=float), d, np.array(upper[:-1], dtype=float), b,
        overwrite_dl=True, overwrite_d=True, overwrite_du=True, overwrite_b=True,
    )
    if info != 0 or not np.all(np.isfinite(sol)):
        raise SingularSystemError(f"tridiagonal solve failed (LAPACK info={info})")

    y, z = sol[:, :-1], sol[:, -1]
    # v = (1, 0, ..., 0, lower[0] / gamma)
    vz = z[0] + lower[0] * z[-1] / gamma
    vy = y[0] + lower[0] * y[-1] / gamma
    denom = 1.0 + vz
    if abs(denom) <= 1e3 * np.finfo(float).eps * (1.0 + abs(vz)):
        raise SingularSystemError("periodic tridiagonal system is singular")
    x = y - np.outer(z, vy / denom)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("periodic tridiagonal solve produced non-finite values")
    return x[:, 0] if single else x
