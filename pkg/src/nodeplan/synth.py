"""Synthetic demonstration families.

Three closed-form families cover the planner's regimes: a planar limit
cycle (periodic), a point-to-point S-curve reach (non-periodic, comes to
rest), and a figure-eight (periodic, self-intersecting in projection).
All demos in a family share the start phase so pairwise DTW measures
per-demo variation, not phase offsets.

The figure-eight lives in 3-d: its xy projection is the Gerono lemniscate,
which crosses itself at the origin, and no autonomous first-order field on
the plane can realize two different velocities at one point. A small
vertical component separates the two passes and makes the shape learnable
while keeping the projected geometry an honest eight.
"""
from __future__ import annotations

import numpy as np

from .core import DemonstrationSet, Trajectory

__all__ = ["limit_cycle_demos", "s_curve_demos", "figure_eight_demos",
           "limit_cycle_field"]


def _noisy(states: np.ndarray, noise: float, rng) -> np.ndarray:
    if noise <= 0:
        return states
    return states + noise * rng.standard_normal(states.shape)


def limit_cycle_field(radius: float = 0.5, omega: float = 2.0,
                      radial_gain: float = 1.0):
    """Ground-truth field with a circular attractor: rotation at angular
    rate omega plus radial relaxation toward the ring."""

    def field(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        tangent = omega * np.array([-x[1], x[0]])
        if r < 1e-12:
            return tangent
        return tangent + radial_gain * (radius - r) * (x / r)

    return field


def limit_cycle_demos(n_demos: int = 5, radius: float = 0.5, omega: float = 2.0,
                      duration: float = 5.0, dt: float = 0.01,
                      noise: float = 0.005, radius_spread: float = 0.0,
                      radial_gain: float = 0.0, seed: int = 0,
                      name: str = "limit-cycle") -> DemonstrationSet:
    """Counterclockwise circular cycle demos, all starting at angle zero.

    radius_spread scales each demo's ring radius by 1 + U(-s, s). With
    radial_gain > 0 demos start off the ring and relax onto it following
    r' = -radial_gain (r - R); with the default 0 they stay on the ring,
    so the set carries no information about off-ring behavior.
    """
    rng = np.random.default_rng(seed)
    times = np.arange(round(duration / dt) + 1) * dt
    theta = omega * times
    demos = []
    for _ in range(n_demos):
        r_k = radius
        if radius_spread > 0:
            r_k = radius * (1.0 + radius_spread * rng.uniform(-1.0, 1.0))
        if radial_gain > 0:
            r0 = r_k * (1.0 + rng.uniform(-0.4, 0.4))
            r = r_k + (r0 - r_k) * np.exp(-radial_gain * times)
        else:
            r = np.full_like(times, r_k)
        states = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        demos.append(Trajectory(times, _noisy(states, noise, rng)))
    return DemonstrationSet(tuple(demos), name=name)


def s_curve_demos(n_demos: int = 5, start=(-0.8, -0.3), goal=(0.8, 0.3),
                  amp: float = 0.25, amp_spread: float = 0.1,
                  duration: float = 4.0, dt: float = 0.01,
                  noise: float = 0.004, seed: int = 0,
                  name: str = "s-curve") -> DemonstrationSet:
    """Planar point-to-point reaches along an S, resting at both ends.

    Progress along the chord follows a minimum-jerk profile (zero velocity
    at the endpoints) and the S comes from one sine period of lateral
    offset, scaled per demo by 1 + U(-amp_spread, amp_spread).
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if start.shape != (2,) or goal.shape != (2,):
        raise ValueError("s_curve_demos is planar: start and goal need length 2")
    rng = np.random.default_rng(seed)
    times = np.arange(round(duration / dt) + 1) * dt
    tau = times / duration
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    chord = goal - start
    normal = np.array([-chord[1], chord[0]])
    normal = normal / np.linalg.norm(normal)
    demos = []
    for _ in range(n_demos):
        a_k = amp * (1.0 + amp_spread * rng.uniform(-1.0, 1.0))
        states = (start + s[:, None] * chord
                  + (a_k * np.sin(2 * np.pi * s))[:, None] * normal)
        demos.append(Trajectory(times, _noisy(states, noise, rng)))
    return DemonstrationSet(tuple(demos), name=name)


def figure_eight_demos(n_demos: int = 5, scale: float = 0.6,
                       height: float = 0.12, omega: float = 1.5,
                       dt: float = 0.01, noise: float = 0.004,
                       scale_spread: float = 0.05, seed: int = 0,
                       name: str = "figure-eight") -> DemonstrationSet:
    """One full period of a 3-d figure-eight per demo.

    xy traces the Gerono lemniscate (x = a sin wt, y = a/2 sin 2wt); the z
    coordinate height*cos(wt) splits the center crossing into two separated
    passes. Per-demo size varies by 1 + U(-scale_spread, scale_spread).
    """
    rng = np.random.default_rng(seed)
    period = 2 * np.pi / omega
    times = np.arange(round(period / dt) + 1) * dt
    wt = omega * times
    demos = []
    for _ in range(n_demos):
        a_k = scale * (1.0 + scale_spread * rng.uniform(-1.0, 1.0))
        states = np.stack([a_k * np.sin(wt),
                           0.5 * a_k * np.sin(2 * wt),
                           height * np.cos(wt)], axis=1)
        demos.append(Trajectory(times, _noisy(states, noise, rng)))
    return DemonstrationSet(tuple(demos), name=name)
