"""Log-space least-squares fits of exponential decay profiles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

__all__ = ["ExpFit", "InsufficientDataError", "fit_exponential", "two_sided_model"]

NOISE_FLOOR = 1e-13
MIN_POINTS = 8


class InsufficientDataError(ValueError):
    """Fewer than ``MIN_POINTS`` samples sit above the noise floor."""


@dataclass(frozen=True)
class ExpFit:
    M: float
    rate: float
    residual: float  # RMS of the log-space residuals
    n_points: int
    model: str
    T: float | None = None
    M_left: float | None = None  # two_sided_free only
    M_right: float | None = None

    def predict(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.model == "one_sided":
            return self.M * np.exp(-self.rate * t)
        if self.model == "two_sided_free":
            return self.M_left * np.exp(-self.rate * t) + self.M_right * np.exp(
                -self.rate * (self.T - t)
            )
        return self.M * two_sided_model(t, self.rate, self.T)


def two_sided_model(t, rate: float, T: float) -> np.ndarray:
    """``exp(-rate t) + exp(-rate (T - t))``."""
    t = np.asarray(t, dtype=float)
    return np.exp(np.logaddexp(-rate * t, -rate * (T - t)))


def _log_two_sided(t, rate, T):
    return np.logaddexp(-rate * t, -rate * (T - t))


def _one_sided(t, y):
    A = np.column_stack([np.ones_like(t), -t])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return coef[0], coef[1], float(np.sqrt(np.mean(res**2)))


def fit_exponential(
    times,
    values,
    model: str = "one_sided",
    *,
    T: float | None = None,
    floor: float = NOISE_FLOOR,
    min_points: int = MIN_POINTS,
) -> ExpFit:
    """Fit an exponential decay model in log space.

    Models:

    * ``"one_sided"``: ``M e^{-rate t}``.
    * ``"two_sided"``: ``M (e^{-rate t} + e^{-rate (T - t)})``. The start
      value comes from a one-sided fit of the first half of the window;
      ``log M`` is then eliminated in closed form for each trial rate and the
      rate is found by a bracketed scalar search.
    * ``"two_sided_free"``: ``M_left e^{-rate t} + M_right e^{-rate (T - t)}``
      with one shared rate; ``M`` reports ``max(M_left, M_right)``.

    Samples at or below ``floor`` are discarded before taking logs.

    Raises:
        InsufficientDataError: fewer than ``min_points`` samples above floor.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = np.isfinite(v) & (v > floor)
    t, v = t[keep], v[keep]
    if t.size < min_points:
        raise InsufficientDataError(
            f"{t.size} samples above the noise floor {floor:g}, need {min_points}"
        )
    y = np.log(v)

    if model == "one_sided":
        logM, rate, resid = _one_sided(t, y)
        return ExpFit(float(np.exp(logM)), float(rate), resid, int(t.size), model)
    if model not in ("two_sided", "two_sided_free"):
        raise ValueError(f"unknown model {model!r}")

    if T is None:
        T = float(np.max(np.asarray(times, dtype=float)))
    if model == "two_sided_free":
        return _fit_free(t, y, T)
    first = t <= 0.5 * T
    if first.sum() >= 2:
        _, rate0, _ = _one_sided(t[first], y[first])
    else:
        _, rate0, _ = _one_sided(T - t, y)
    scale = max(abs(rate0), 1.0 / T)

    def profiled(rate):
        shape = _log_two_sided(t, rate, T)
        logM = np.mean(y - shape)
        return float(np.mean((y - logM - shape) ** 2))

    grid = scale * np.logspace(-4, 3, 281)
    objective = np.array([profiled(r) for r in grid])
    k = int(np.argmin(objective))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if hi > lo:
        best = minimize_scalar(
            profiled, bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-14 * max(1.0, hi)},
        )
        rate = float(best.x) if best.fun <= objective[k] else float(grid[k])
    else:
        rate = float(grid[k])
    logM = float(np.mean(y - _log_two_sided(t, rate, T)))
    # Gauss-Newton polish of the bracketed estimate
    polish = least_squares(
        lambda p: y - p[0] - _log_two_sided(t, np.exp(p[1]), T),
        [logM, np.log(rate)], method="lm", xtol=1e-15, ftol=1e-15,
    )
    if np.sqrt(np.mean(polish.fun**2)) <= np.sqrt(profiled(rate)):
        logM, rate = float(polish.x[0]), float(np.exp(polish.x[1]))
    resid = float(np.sqrt(profiled(rate)))
    return ExpFit(float(np.exp(logM)), rate, resid, int(t.size), model, float(T))


def _fit_free(t, y, T):
    halves = []
    for mask, s in ((t <= 0.5 * T, t), (t > 0.5 * T, T - t)):
        if mask.sum() >= 2:
            logM, rate, _ = _one_sided(s[mask], y[mask])
            halves.append((logM, rate))
        else:
            halves.append((None, None))
    rates = [r for _, r in halves if r is not None and r > 0]
    rate0 = float(np.mean(rates)) if rates else 1.0 / T
    logs = [lm if lm is not None else float(np.min(y)) - 30.0 for lm, _ in halves]

    def resid(p):
        a, b, log_rate = p
        r = np.exp(log_rate)
        return y - np.logaddexp(a - r * t, b - r * (T - t))

    sol = least_squares(
        resid, [logs[0], logs[1], np.log(rate0)], method="lm", xtol=1e-15, ftol=1e-15
    )
    a, b, log_rate = sol.x
    res = float(np.sqrt(np.mean(resid(sol.x) ** 2)))
    Ml, Mr = float(np.exp(a)), float(np.exp(b))
    return ExpFit(max(Ml, Mr), float(np.exp(log_rate)), res, int(t.size),
                  "two_sided_free", float(T), Ml, Mr)
