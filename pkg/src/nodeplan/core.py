"""Trajectory containers and demonstration-set plumbing.

Everything downstream (training, planning, evaluation) consumes the two
containers defined here: a single ``Trajectory`` (strictly increasing sample
times plus states) and a ``DemonstrationSet`` (same-dimension trajectories,
possibly of different lengths and sampling rates). ``TargetArray`` is the
planner-facing discretization of a learned flow: points, matching field
velocities, sample spacing, and a periodicity flag.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed demonstration or trajectory input."""


@dataclass(frozen=True)
class Trajectory:
    """Sampled path: times (T,) strictly increasing, states (T, d)."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float)
        if t.ndim != 1:
            raise DataError("times must be a 1-d array")
        if x.ndim != 2:
            raise DataError("states must be a 2-d array (T, d)")
        if t.shape[0] != x.shape[0]:
            raise DataError(
                f"times has {t.shape[0]} rows but states has {x.shape[0]}"
            )
        if t.shape[0] < 2:
            raise DataError("a trajectory needs at least 2 samples")
        if x.shape[1] < 1:
            raise DataError("state dimension must be >= 1")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(x)):
            raise DataError("times and states must be finite")
        if np.any(np.diff(t) <= 0):
            k = int(np.argmax(np.diff(t) <= 0))
            raise DataError(f"times must be strictly increasing (violated at index {k})")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)

    @property
    def dim(self) -> int:
        return int(self.states.shape[1])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def is_uniform(self, rel_tol: float = 1e-9) -> bool:
        """True when sample spacing is constant to within rel_tol."""
        dt = np.diff(self.times)
        return bool(np.all(np.abs(dt - dt[0]) <= rel_tol * max(abs(dt[0]), 1e-300)))


@dataclass(frozen=True)
class DemonstrationSet:
    """A bundle of same-dimension demonstrations."""

    demos: tuple[Trajectory, ...]
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "demos", tuple(self.demos))

    @property
    def dim(self) -> int:
        return self.demos[0].dim

    def __len__(self) -> int:
        return len(self.demos)

    def __iter__(self):
        return iter(self.demos)


@dataclass(frozen=True)
class TargetArray:
    """Discretized reference trajectory the planner tracks.

    points[k] is the reference state at t0 + k*dt and velocities[k] the
    learned field evaluated there, so the planner never re-evaluates the
    network on reference points inside its control loop.
    """

    points: np.ndarray
    velocities: np.ndarray
    dt: float
    periodic: bool

    def __post_init__(self) -> None:
        p = np.asarray(self.points, dtype=float)
        v = np.asarray(self.velocities, dtype=float)
        if p.ndim != 2 or v.shape != p.shape:
            raise DataError("points and velocities must share shape (T, d)")
        if p.shape[0] < 2:
            raise DataError("a target array needs at least 2 rows")
        if self.dt <= 0:
            raise DataError("dt must be positive")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise DataError("target array must be finite")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "velocities", v)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    def diameter(self) -> float:
        """Bounding-box diagonal of the point cloud."""
        span = self.points.max(axis=0) - self.points.min(axis=0)
        return float(np.linalg.norm(span))


def validate_demo_set(ds: DemonstrationSet) -> None:
    """Raise DataError unless every demo is finite, monotone and same-dim."""
    if len(ds) == 0:
        raise DataError("demonstration set is empty")
    d = ds.demos[0].dim
    for i, tr in enumerate(ds):
        # Trajectory.__post_init__ already enforced finiteness/monotonicity.
        if tr.dim != d:
            raise DataError(f"demo {i} has dim {tr.dim}, expected {d}")


def resample(tr: Trajectory, dt: float) -> Trajectory:
    """Linear-interpolation resample onto a uniform grid of spacing dt.

    The grid runs t0, t0+dt, ... and always includes the final time, so both
    endpoints are preserved exactly. Idempotent on already-uniform inputs.
    """
    if dt <= 0:
        raise DataError("dt must be positive")
    span = tr.duration
    if dt > span:
        raise DataError("dt exceeds trajectory duration")
    t0, t1 = float(tr.times[0]), float(tr.times[-1])
    n = int(np.floor(span / dt + 1e-9))
    grid = t0 + dt * np.arange(n + 1)
    # guard against float creep past the end, then pin the final sample
    grid = grid[grid <= t1 + 1e-12 * max(abs(t1), 1.0)]
    if abs(grid[-1] - t1) > 1e-12 * max(abs(t1), 1.0):
        grid = np.append(grid, t1)
    else:
        grid[-1] = t1
    states = np.column_stack(
        [np.interp(grid, tr.times, tr.states[:, j]) for j in range(tr.dim)]
    )
    return Trajectory(times=grid, states=states)


# ---------------------------------------------------------------------------
# file formats
#
# Demo JSON:  {"name": str, "dim": int,
#              "demos": [{"times": [...], "states": [[...], ...]}, ...]}
# Demo CSV:   one file per demo, header t,x0,x1,...  (load_demo_csv accepts a
#             list of paths and bundles them)
# ---------------------------------------------------------------------------


def demo_set_to_dict(ds: DemonstrationSet) -> dict:
    return {
        "name": ds.name,
        "dim": ds.dim,
        "demos": [
            {"times": tr.times.tolist(), "states": tr.states.tolist()} for tr in ds
        ],
    }


def save_demo_json(ds: DemonstrationSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(demo_set_to_dict(ds)))


def demo_set_from_dict(obj: dict) -> DemonstrationSet:
    if not isinstance(obj, dict) or "demos" not in obj:
        raise DataError("demo JSON must be an object with a 'demos' list")
    raw = obj["demos"]
    if not isinstance(raw, list) or len(raw) == 0:
        raise DataError("'demos' must be a non-empty list")
    demos = []
    for i, rec in enumerate(raw):
        try:
            demos.append(Trajectory(times=np.asarray(rec["times"], dtype=float),
                                    states=np.asarray(rec["states"], dtype=float)))
        except (KeyError, TypeError) as exc:
            raise DataError(f"demo {i} is malformed: {exc}") from exc
    ds = DemonstrationSet(demos=tuple(demos), name=str(obj.get("name", "")))
    validate_demo_set(ds)
    declared = obj.get("dim")
    if declared is not None and int(declared) != ds.dim:
        raise DataError(f"declared dim {declared} != actual dim {ds.dim}")
    return ds


def load_demo_json(path: str | Path) -> DemonstrationSet:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid demo JSON: {exc}") from exc
    return demo_set_from_dict(obj)


def load_demo_csv(paths: Sequence[str | Path], name: str = "") -> DemonstrationSet:
    """Bundle per-demo CSV files (header t,x0,x1,...) into one set."""
    demos = []
    for p in paths:
        with open(p, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 3:
            raise DataError(f"{p}: need a header plus at least 2 samples")
        header = [c.strip() for c in rows[0]]
        if header[0] != "t" or any(not c.startswith("x") for c in header[1:]):
            raise DataError(f"{p}: expected header t,x0,x1,...")
        try:
            data = np.array([[float(v) for v in row] for row in rows[1:]])
        except ValueError as exc:
            raise DataError(f"{p}: non-numeric cell: {exc}") from exc
        demos.append(Trajectory(times=data[:, 0], states=data[:, 1:]))
    ds = DemonstrationSet(demos=tuple(demos), name=name)
    validate_demo_set(ds)
    return ds


def save_demo_csv(tr: Trajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{j}" for j in range(tr.dim)])
        for t, x in zip(tr.times, tr.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x])
