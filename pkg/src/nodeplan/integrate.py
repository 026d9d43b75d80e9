"""Fixed-step RK4 and adaptive Dormand-Prince 5(4) integration.

Both integrators consume an autonomous field ``f(x) -> xdot`` and land
exactly on the requested sample times (the adaptive stepper truncates its
step to each sample time rather than interpolating, which at control-loop
sample densities is both simpler and exact).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import DataError, Trajectory

Field = Callable[[np.ndarray], np.ndarray]


class IntegrationError(RuntimeError):
    """Numeric failure inside an integrator (budget, underflow, non-finite)."""


@dataclass(frozen=True)
class IntegratorConfig:
    """method 'rk4' uses fixed step h (h<=0 means one step per interval);
    'dopri5' adapts between samples under (rtol, atol)."""

    method: str = "dopri5"
    rtol: float = 1e-6
    atol: float = 1e-8
    h: float = 0.0
    max_steps: int = 200_000

    def __post_init__(self) -> None:
        if self.method not in ("rk4", "dopri5"):
            raise DataError(f"unknown integrator method {self.method!r}")
        if self.rtol <= 0 or self.atol <= 0:
            raise DataError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise DataError("max_steps must be >= 1")


def step_once(field: Field, x: np.ndarray, dt: float) -> np.ndarray:
    """Single classical RK4 step."""
    k1 = field(x)
    k2 = field(x + 0.5 * dt * k1)
    k3 = field(x + 0.5 * dt * k2)
    k4 = field(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_times(times: np.ndarray) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.shape[0] < 2:
        raise DataError("times must be a 1-d array with at least 2 entries")
    if np.any(np.diff(t) <= 0):
        raise DataError("times must be strictly increasing")
    return t


def rk4_fixed(field: Field, x0: np.ndarray, times: Sequence[float],
              h: float = 0.0, max_steps: int = 200_000) -> Trajectory:
    """Fixed-step RK4 sampled exactly at `times`.

    Each interval [t_k, t_k+1] is split into ceil(interval/h) equal substeps
    (a single substep when h <= 0), so samples are hit exactly.
    """
    t = _check_times(times)
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((t.shape[0], x.shape[0]))
    out[0] = x
    steps = 0
    for k in range(t.shape[0] - 1):
        span = t[k + 1] - t[k]
        n_sub = 1 if h <= 0 else max(1, int(np.ceil(span / h - 1e-12)))
        sub = span / n_sub
        for _ in range(n_sub):
            steps += 1
            if steps > max_steps:
                raise IntegrationError("integration budget exceeded")
            x = step_once(field, x, sub)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(
                f"field produced non-finite value at t={t[k + 1]:.6g}")
        out[k + 1] = x
    return Trajectory(times=t, states=out)


# Dormand-Prince 5(4) tableau (FSAL: last stage of an accepted step is the
# first stage of the next).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4

_SAFETY = 0.9
_BETA = 0.04            # PI gain on the previous error
_EXPO = 0.2 - 0.75 * _BETA
_H_MIN = 1e-6


def dopri5(field: Field, x0: np.ndarray, times: Sequence[float],
           rtol: float = 1e-6, atol: float = 1e-8, max_steps: int = 200_000,
           stats: list | None = None) -> Trajectory:
    """Adaptive RK5(4) sampled exactly at `times`.

    PI step control with safety 0.9; steps clamped to [1e-6, span/4]. When
    `stats` is a list, (t, h, err_norm, accepted) tuples are appended for
    every attempted step.
    """
    t_req = _check_times(times)
    span = float(t_req[-1] - t_req[0])
    h_max = span / 4.0
    x = np.asarray(x0, dtype=float).copy()
    d = x.shape[0]
    out = np.empty((t_req.shape[0], d))
    out[0] = x

    t = float(t_req[0])
    h = min(max(span / 100.0, _H_MIN), h_max)
    fac_old = 1e-4
    k = np.empty((7, d))
    k[0] = field(x)
    steps = 0
    next_i = 1

    while next_i < t_req.shape[0]:
        # never step past the next requested sample; land on it exactly
        h_try = min(h, h_max, t_req[next_i] - t)
        h_try = max(h_try, min(_H_MIN, t_req[next_i] - t))
        steps += 1
        if steps > max_steps:
            raise IntegrationError("integration budget exceeded")

        for s in range(1, 7):
            xs = x + h_try * (k[:s].T @ _DP_A[s])
            k[s] = field(xs)
        x_new = x + h_try * (k.T @ _DP_B5)
        if not np.all(np.isfinite(x_new)):
            raise IntegrationError(
                f"field produced non-finite value at t={t + h_try:.6g}")
        err_vec = h_try * (k.T @ _DP_E)
        tol = atol + rtol * max(float(np.linalg.norm(x)),
                                float(np.linalg.norm(x_new)))
        err = float(np.linalg.norm(err_vec)) / tol
        accepted = err <= 1.0
        if stats is not None:
            stats.append((t, h_try, err, accepted))

        if accepted:
            t = t + h_try
            x = x_new
            k[0] = k[6]  # FSAL
            if abs(t - t_req[next_i]) <= 1e-12 * max(abs(t), 1.0):
                out[next_i] = x
                next_i += 1
            err_c = max(err, 1e-10)
            scale = _SAFETY * err_c ** (-_EXPO) * fac_old ** _BETA
            h = h_try * min(10.0, max(0.2, scale))
            fac_old = max(err, 1e-4)
        else:
            shrink = _SAFETY * max(err, 1e-10) ** (-0.2)
            h = h_try * min(1.0, max(0.2, shrink))
            if h < _H_MIN and h_try <= _H_MIN * (1 + 1e-9):
                raise IntegrationError(
                    f"step size underflow at t={t:.6g} (err {err:.3g})")
        h = min(max(h, _H_MIN), h_max)
    return Trajectory(times=t_req, states=out)


def integrate_path(field: Field, x0: np.ndarray, times: Sequence[float],
                   cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate `field` from x0, sampled exactly at `times` (times[0] is the
    initial condition's timestamp)."""
    cfg = cfg or IntegratorConfig()
    if cfg.method == "rk4":
        return rk4_fixed(field, x0, times, h=cfg.h, max_steps=cfg.max_steps)
    return dopri5(field, x0, times, rtol=cfg.rtol, atol=cfg.atol,
                  max_steps=cfg.max_steps)
