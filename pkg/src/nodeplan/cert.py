"""Lyapunov and barrier certificates plus obstacle-scenario parsing.

The planner consumes certificates only through evaluated terms:

  clf_terms:  V(e) = |e|^2, grad V = 2e, alpha(V) with linear alpha
  cbf_terms:  B(x), grad B(x), gamma(B(x)) with linear gamma

Rates are extended class-K-infinity: strictly increasing, zero at zero, and
defined for negative arguments by odd extension, so the barrier condition
keeps pushing the state back if numerics ever leave the safe set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DataError


@dataclass(frozen=True)
class RateFn:
    """Linear extended class-K-infinity rate s -> gain * s."""

    gain: float
    kind: str = "linear"

    def __post_init__(self) -> None:
        if self.kind != "linear":
            raise DataError(f"unknown rate kind {self.kind!r}")
        if self.gain <= 0:
            raise DataError("rate gain must be positive")

    def __call__(self, s: float) -> float:
        return self.gain * s  # odd in s by construction


@dataclass(frozen=True)
class Lyapunov:
    """Squared-norm tracking certificate V(e) = |e|^2."""

    kind: str = "squared_norm"

    def value(self, e: np.ndarray) -> float:
        return float(np.dot(e, e))

    def grad(self, e: np.ndarray) -> np.ndarray:
        return 2.0 * e


@dataclass(frozen=True)
class CircleBarrier:
    """B(x) = |x - c|^2 - r^2: negative strictly inside, positive outside."""

    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        c = np.asarray(self.center, dtype=float)
        if self.radius <= 0:
            raise DataError("radius must be positive")
        object.__setattr__(self, "center", c)

    def value(self, x: np.ndarray) -> float:
        d = x - self.center
        return float(np.dot(d, d) - self.radius * self.radius)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (x - self.center)


@dataclass(frozen=True)
class BoxBarrier:
    """Smoothed axis-aligned box obstacle.

    Per-axis excess q_j = sabs(x_j - c_j) - half_j - margin with the smooth
    absolute value sabs(s) = sqrt(s^2 + tau^2) - tau, blended by a softmax:

        B(x) = tau * log( mean_j exp(q_j / tau) )

    B is smooth everywhere, B <= max_j q_j, and the zero level set sits
    slightly outside the true box (the obstacle is inflated by at most
    tau * (log d + 1) per axis), which errs on the safe side. The default
    temperature is 0.05 * the box diagonal.
    """

    lo: np.ndarray
    hi: np.ndarray
    margin: float = 0.0
    temperature: float = 0.0  # <=0: default 0.05 * diagonal

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DataError("lo and hi must be 1-d arrays of equal shape")
        if np.any(hi <= lo):
            raise DataError("box must have positive extent on every axis")
        if self.margin < 0:
            raise DataError("margin must be >= 0")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.temperature <= 0:
            object.__setattr__(self, "temperature",
                               0.05 * float(np.linalg.norm(hi - lo)))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def _q(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        tau = self.temperature
        s = x - self.center
        sab = np.sqrt(s * s + tau * tau) - tau
        half = 0.5 * (self.hi - self.lo)
        return sab - half - self.margin, s / np.sqrt(s * s + tau * tau)

    def value(self, x: np.ndarray) -> float:
        q, _ = self._q(x)
        tau = self.temperature
        qm = q.max()
        return float(qm + tau * np.log(np.mean(np.exp((q - qm) / tau))))

    def grad(self, x: np.ndarray) -> np.ndarray:
        q, dsab = self._q(x)
        w = np.exp((q - q.max()) / self.temperature)
        w /= w.sum()
        return w * dsab


Barrier = CircleBarrier | BoxBarrier


@dataclass(frozen=True)
class CertificateSet:
    """Immutable bundle: one CLF rate plus zero or more (barrier, rate) pairs."""

    alpha: RateFn
    barriers: tuple[tuple[Barrier, RateFn], ...] = ()
    lyapunov: Lyapunov = Lyapunov()

    def __post_init__(self) -> None:
        object.__setattr__(self, "barriers", tuple(self.barriers))


def clf_terms(cs: CertificateSet, e: np.ndarray) -> tuple[float, np.ndarray, float]:
    """(V, grad V, alpha(V)) at tracking error e."""
    v = cs.lyapunov.value(e)
    return v, cs.lyapunov.grad(e), cs.alpha(v)


def cbf_terms(barrier: Barrier, gamma: RateFn,
              x: np.ndarray) -> tuple[float, np.ndarray, float]:
    """(B, grad B, gamma(B)) at state x."""
    b = barrier.value(x)
    return b, barrier.grad(x), gamma(b)


def min_barrier(cs: CertificateSet, x: np.ndarray) -> float:
    """min_i B_i(x); +inf with no barriers."""
    if not cs.barriers:
        return float("inf")
    return min(b.value(x) for b, _ in cs.barriers)


# ---------------------------------------------------------------------------
# obstacle scenario files
#
# {"obstacles": [
#    {"shape": "circle", "center": [..], "radius": r, "gamma_gain": g,
#     "path": [{"t": 0.0, "center": [..]}, ...]},          # path optional
#    {"shape": "box", "min": [..], "max": [..], "margin": m, "gamma_gain": g}
# ]}
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObstacleSpec:
    """A barrier plus its rate and an optional piecewise-linear center path."""

    barrier: Barrier
    gamma: RateFn
    waypoints: tuple[tuple[float, np.ndarray], ...] = ()

    def center_at(self, t: float) -> np.ndarray:
        if not self.waypoints:
            return self.barrier.center
        ts = [w[0] for w in self.waypoints]
        cs = [w[1] for w in self.waypoints]
        if t <= ts[0]:
            return cs[0]
        if t >= ts[-1]:
            return cs[-1]
        k = int(np.searchsorted(ts, t, side="right")) - 1
        frac = (t - ts[k]) / (ts[k + 1] - ts[k])
        return cs[k] + frac * (cs[k + 1] - cs[k])

    def barrier_at(self, t: float) -> Barrier:
        """Barrier translated to the path position at time t."""
        if not self.waypoints:
            return self.barrier
        c = self.center_at(t)
        if isinstance(self.barrier, CircleBarrier):
            return replace(self.barrier, center=c)
        shift = c - self.barrier.center
        return replace(self.barrier, lo=self.barrier.lo + shift,
                       hi=self.barrier.hi + shift)

    def to_dict(self) -> dict:
        if isinstance(self.barrier, CircleBarrier):
            d = {"shape": "circle", "center": self.barrier.center.tolist(),
                 "radius": self.barrier.radius, "gamma_gain": self.gamma.gain}
        else:
            d = {"shape": "box", "min": self.barrier.lo.tolist(),
                 "max": self.barrier.hi.tolist(), "margin": self.barrier.margin,
                 "gamma_gain": self.gamma.gain}
        if self.waypoints:
            d["path"] = [{"t": t, "center": c.tolist()} for t, c in self.waypoints]
        return d


def obstacle_from_dict(rec: dict, default_gamma_gain: float = 1.0) -> ObstacleSpec:
    try:
        shape = rec["shape"]
        gain = float(rec.get("gamma_gain", default_gamma_gain))
        if shape == "circle":
            barrier: Barrier = CircleBarrier(center=np.asarray(rec["center"], float),
                                             radius=float(rec["radius"]))
        elif shape == "box":
            barrier = BoxBarrier(lo=np.asarray(rec["min"], float),
                                 hi=np.asarray(rec["max"], float),
                                 margin=float(rec.get("margin", 0.0)),
                                 temperature=float(rec.get("temperature", 0.0)))
        else:
            raise DataError(f"unknown obstacle shape {shape!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed obstacle record: {exc}") from exc
    waypoints = []
    for wp in rec.get("path", []) or []:
        try:
            waypoints.append((float(wp["t"]), np.asarray(wp["center"], float)))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed obstacle path waypoint: {exc}") from exc
    if waypoints and any(waypoints[i + 1][0] <= waypoints[i][0]
                         for i in range(len(waypoints) - 1)):
        raise DataError("obstacle path waypoints must have increasing times")
    return ObstacleSpec(barrier=barrier, gamma=RateFn(gain=gain),
                        waypoints=tuple(waypoints))


def load_obstacles(source: str | Path | dict) -> list[ObstacleSpec]:
    if isinstance(source, (str, Path)):
        try:
            obj = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid obstacle JSON: {exc}") from exc
    else:
        obj = source
    if not isinstance(obj, dict) or not isinstance(obj.get("obstacles"), list):
        raise DataError("obstacle JSON must be an object with an 'obstacles' list")
    return [obstacle_from_dict(rec) for rec in obj["obstacles"]]


def certificates(alpha_gain: float,
                 obstacles: Sequence[ObstacleSpec] = (),
                 t: float = 0.0) -> CertificateSet:
    """CertificateSet with obstacle barriers placed at their time-t positions."""
    return CertificateSet(
        alpha=RateFn(gain=alpha_gain),
        barriers=tuple((ob.barrier_at(t), ob.gamma) for ob in obstacles),
    )
