"""Closed-loop simulation: kinematic plant, disturbances, rollout logs.

The plant is kinematic (the commanded reference velocity is realized
exactly); each 1 kHz tick applies due disturbances, places moving obstacles
at the current time, plans one step, and advances the state with one RK4
step of the (constant-over-the-tick) commanded velocity, which for a
constant field is exact.

Disturbances:
  teleport       at time `at`, shift the state by `offset`
  velocity_bias  on [t_from, t_to], add `bias` to the commanded velocity
  hold           on [t_from, t_to], force the commanded velocity to zero
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cert import ObstacleSpec, certificates, load_obstacles, obstacle_from_dict
from .core import DataError, TargetArray
from .integrate import step_once
from .node import MlpField, generate_target_array
from .planner import PlannerConfig, PlannerState, plan_step


@dataclass(frozen=True)
class Disturbance:
    kind: str                      # teleport | velocity_bias | hold
    at: float = 0.0
    t_from: float = 0.0
    t_to: float = 0.0
    offset: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("teleport", "velocity_bias", "hold"):
            raise DataError(f"unknown disturbance kind {self.kind!r}")
        if self.kind == "teleport" and self.offset is None:
            raise DataError("teleport needs an offset")
        if self.kind == "velocity_bias" and self.bias is None:
            raise DataError("velocity_bias needs a bias vector")
        if self.kind in ("velocity_bias", "hold") and self.t_to <= self.t_from:
            raise DataError(f"{self.kind} needs t_to > t_from")


def disturbance_from_dict(rec: dict) -> Disturbance:
    try:
        kind = rec["kind"]
        if kind == "teleport":
            return Disturbance(kind=kind, at=float(rec["at"]),
                               offset=np.asarray(rec["offset"], float))
        if kind == "velocity_bias":
            return Disturbance(kind=kind, t_from=float(rec["from"]),
                               t_to=float(rec["to"]),
                               bias=np.asarray(rec["bias"], float))
        if kind == "hold":
            return Disturbance(kind=kind, t_from=float(rec["from"]),
                               t_to=float(rec["to"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed disturbance record: {exc}") from exc
    raise DataError(f"unknown disturbance kind {kind!r}")


@dataclass
class Scenario:
    model: MlpField
    target: TargetArray
    x0: np.ndarray
    horizon: float
    control_dt: float = 1e-3
    obstacles: list[ObstacleSpec] = dc_field(default_factory=list)
    disturbances: list[Disturbance] = dc_field(default_factory=list)
    planner: PlannerConfig = dc_field(default_factory=PlannerConfig)
    name: str = ""

    def __post_init__(self) -> None:
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.target.dim,):
            raise DataError("x0 dimension does not match the target array")
        if self.horizon <= 0 or self.control_dt <= 0:
            raise DataError("horizon and control_dt must be positive")


def planner_config_from_dict(rec: dict) -> PlannerConfig:
    return PlannerConfig(
        lookahead=int(rec.get("lookahead", 5)),
        alpha_gain=float(rec.get("alpha_gain", 1.0)),
        lam=float(rec.get("lambda", 100.0)),
        nn_mode=str(rec.get("nn_mode", "global")),
        nn_radius=int(rec.get("nn_radius", 50)),
        infeasible_policy=str(rec.get("infeasible_policy", "freeze")),
    )


def load_scenario(path: str | Path) -> Scenario:
    """Scenario JSON: model checkpoint path (relative to the scenario file),
    target-array parameters, obstacles, disturbance script, planner knobs."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid scenario JSON: {exc}") from exc
    if not isinstance(obj, dict) or "model" not in obj:
        raise DataError("scenario JSON must be an object with a 'model' path")
    model_path = Path(obj["model"])
    if not model_path.is_absolute():
        model_path = path.parent / model_path
    model = MlpField.load(model_path)

    tgt = obj.get("target", {})
    t_x0 = tgt.get("x0", model.meta.get("train_x0"))
    if t_x0 is None:
        raise DataError("scenario needs target.x0 (checkpoint has no stored start)")
    target = generate_target_array(model, np.asarray(t_x0, float),
                                   span=float(tgt.get("span", 10.0)),
                                   dt=float(tgt.get("dt", 1e-3)))

    obstacles = [obstacle_from_dict(rec) for rec in obj.get("obstacles", [])]
    disturbances = [disturbance_from_dict(rec) for rec in obj.get("disturbances", [])]
    x0 = np.asarray(obj.get("x0", target.points[0]), dtype=float)
    return Scenario(model=model, target=target, x0=x0,
                    horizon=float(obj.get("horizon", 10.0)),
                    control_dt=float(obj.get("control_dt", 1e-3)),
                    obstacles=obstacles, disturbances=disturbances,
                    planner=planner_config_from_dict(obj.get("planner", {})),
                    name=str(obj.get("name", path.stem)))


@dataclass
class RolloutLog:
    times: np.ndarray
    states: np.ndarray
    target_indices: np.ndarray
    u: np.ndarray
    slack: np.ndarray
    v: np.ndarray
    min_b: np.ndarray
    status: list[str]
    scenario_name: str = ""
    config: dict = dc_field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def summary(self) -> dict:
        has_obs = bool(np.any(np.isfinite(self.min_b)))
        u_norm = np.linalg.norm(self.u, axis=1)
        e_final = float(np.sqrt(self.v[-1]))
        return {
            "scenario": self.scenario_name,
            "steps": len(self),
            "duration": float(self.times[-1] - self.times[0]) + float(
                self.times[1] - self.times[0]) if len(self) > 1 else 0.0,
            "final_tracking_error": e_final,
            "max_v": float(self.v.max()),
            "min_barrier": float(self.min_b.min()) if has_obs else None,
            "mean_u_norm": float(u_norm.mean()),
            "max_u_norm": float(u_norm.max()),
            "max_slack": float(self.slack.max()),
            "status_counts": {s: self.status.count(s) for s in set(self.status)},
            "config": self.config,
        }

    def to_csv(self, path: str | Path) -> None:
        d = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{j}" for j in range(d)]
                       + [f"u{j}" for j in range(d)]
                       + ["target_index", "epsilon", "V", "min_b", "status"])
            for k in range(len(self)):
                w.writerow([repr(float(self.times[k]))]
                           + [repr(float(v)) for v in self.states[k]]
                           + [repr(float(v)) for v in self.u[k]]
                           + [int(self.target_indices[k]),
                              repr(float(self.slack[k])),
                              repr(float(self.v[k])),
                              repr(float(self.min_b[k])),
                              self.status[k]])

    def save_summary(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2))


def run(sc: Scenario) -> RolloutLog:
    """Simulate the closed loop over the scenario horizon."""
    dt = sc.control_dt
    n = int(round(sc.horizon / dt))
    if n < 1:
        raise DataError("horizon shorter than one control tick")
    d = sc.target.dim
    x = sc.x0.copy()
    state = PlannerState()
    moving = any(ob.waypoints for ob in sc.obstacles)
    cs = certificates(sc.planner.alpha_gain, sc.obstacles, t=0.0)

    times = np.empty(n)
    states = np.empty((n, d))
    target_idx = np.empty(n, dtype=int)
    u_log = np.empty((n, d))
    slack = np.empty(n)
    v_log = np.empty(n)
    min_b = np.empty(n)
    status: list[str] = []
    teleported = [False] * len(sc.disturbances)

    for k in range(n):
        t = k * dt
        for i, dist in enumerate(sc.disturbances):
            if dist.kind == "teleport" and not teleported[i] and t >= dist.at:
                x = x + dist.offset
                teleported[i] = True
        if moving:
            cs = certificates(sc.planner.alpha_gain, sc.obstacles, t=t)
        step = plan_step(x, sc.target, sc.model, cs, sc.planner, state)
        xdot = step.xdot_ref
        for dist in sc.disturbances:
            if dist.kind == "hold" and dist.t_from <= t < dist.t_to:
                xdot = np.zeros(d)
            elif dist.kind == "velocity_bias" and dist.t_from <= t < dist.t_to:
                xdot = xdot + dist.bias

        times[k] = t
        states[k] = x
        target_idx[k] = step.target_index
        u_log[k] = step.u
        slack[k] = step.slack
        v_log[k] = step.diagnostics["V"]
        min_b[k] = step.diagnostics["min_b"]
        status.append(step.status)

        # kinematic plant: one RK4 step of the constant commanded velocity
        xd = xdot
        x = step_once(lambda s: xd, x, dt)

    cfg = sc.planner
    config = {"horizon": sc.horizon, "control_dt": dt,
              "lookahead": cfg.lookahead, "alpha_gain": cfg.alpha_gain,
              "lambda": cfg.lam, "nn_mode": cfg.nn_mode,
              "infeasible_policy": cfg.infeasible_policy,
              "n_obstacles": len(sc.obstacles), "periodic": sc.target.periodic}
    return RolloutLog(times=times, states=states, target_indices=target_idx,
                      u=u_log, slack=slack, v=v_log, min_b=min_b, status=status,
                      scenario_name=sc.name, config=config)


def run_batch(scenarios: Sequence[Scenario]) -> list[RolloutLog | None]:
    """Run scenarios independently, order-preserving.

    A scenario that raises yields None in its slot instead of aborting the
    rest of the batch.
    """
    out: list[RolloutLog | None] = []
    for sc in scenarios:
        try:
            out.append(run(sc))
        except Exception:
            out.append(None)
    return out
