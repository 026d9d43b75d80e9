"""Online target selection and virtual-control planning.

Each control tick:

1. Find the nearest target-array index m to the current state (globally, or
   within +-nn_radius of the previous index in "windowed" mode, which keeps
   self-intersecting shapes from snapping across the crossing).
2. For each candidate target in the lookahead window [m, m+N-1] (wrapping on
   periodic arrays, truncated otherwise), solve the min-norm tracking
   problem against that candidate.
3. Commit to the candidate with the smallest |u|^2 (ties: earliest in the
   window) and command xdot_ref = f(x) + u with the already-computed u, so a
   tick never solves the same QP twice.

Without barriers the per-candidate problem has a closed form and the whole
window is solved vectorized; with barriers each candidate runs the dense
active-set solver with the barrier rows shared across candidates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cert import CertificateSet, cbf_terms, clf_terms, min_barrier
from .core import DataError, TargetArray
from .node import MlpField
from .qp import QpSolution, solve_clf_cbf, solve_clf_closed_form, solve_dense_qp, QpProblem


class PlanningInfeasible(RuntimeError):
    """Every candidate QP in the window came back infeasible."""

    def __init__(self, statuses: list[str]):
        super().__init__(f"all {len(statuses)} candidate problems infeasible")
        self.statuses = statuses


@dataclass(frozen=True)
class PlannerConfig:
    lookahead: int = 5
    alpha_gain: float = 1.0
    lam: float = 100.0
    nn_mode: str = "global"            # global | windowed
    nn_radius: int = 50
    infeasible_policy: str = "freeze"  # freeze | cbf_only

    def __post_init__(self) -> None:
        if self.lookahead < 1:
            raise DataError("lookahead must be >= 1")
        if self.alpha_gain <= 0:
            raise DataError("alpha_gain must be positive")
        if self.lam <= 0:
            raise DataError("lambda must be positive")
        if self.nn_mode not in ("global", "windowed"):
            raise DataError(f"unknown nn_mode {self.nn_mode!r}")
        if self.nn_mode == "windowed" and self.nn_radius < 1:
            raise DataError("nn_radius must be >= 1 in windowed mode")
        if self.infeasible_policy not in ("freeze", "cbf_only"):
            raise DataError(f"unknown infeasible_policy {self.infeasible_policy!r}")


@dataclass
class PlannerState:
    """Tiny mutable carry-over between ticks (windowed nearest-neighbor)."""

    prev_index: int | None = None


@dataclass(frozen=True)
class PlanStep:
    x: np.ndarray
    e: np.ndarray
    u: np.ndarray
    xdot_ref: np.ndarray
    target: np.ndarray
    target_index: int
    slack: float
    status: str
    diagnostics: dict = field(default_factory=dict)


def _nearest_index(x: np.ndarray, ta: TargetArray, cfg: PlannerConfig,
                   state: PlannerState | None) -> int:
    pts = ta.points
    n = len(ta)
    if cfg.nn_mode == "windowed" and state is not None and state.prev_index is not None:
        if ta.periodic:
            idx = (state.prev_index + np.arange(-cfg.nn_radius, cfg.nn_radius + 1)) % n
        else:
            lo = max(0, state.prev_index - cfg.nn_radius)
            hi = min(n, state.prev_index + cfg.nn_radius + 1)
            idx = np.arange(lo, hi)
        d = pts[idx] - x
        return int(idx[np.argmin(np.einsum("ij,ij->i", d, d))])
    d = pts - x
    return int(np.argmin(np.einsum("ij,ij->i", d, d)))


def _candidate_indices(m: int, ta: TargetArray, n_look: int) -> np.ndarray:
    n = len(ta)
    if ta.periodic:
        return (m + np.arange(n_look)) % n
    return np.arange(m, min(m + n_look, n))


def _barrier_rows(cs: CertificateSet, x: np.ndarray):
    rows = []
    min_b = float("inf")
    for barrier, gamma in cs.barriers:
        b, gb, gamma_b = cbf_terms(barrier, gamma, x)
        rows.append((gb, gamma_b))
        min_b = min(min_b, b)
    return rows, min_b


def _choose(x: np.ndarray, ta: TargetArray, f_x: np.ndarray,
            cs: CertificateSet, cfg: PlannerConfig,
            state: PlannerState | None):
    if cfg.lookahead > len(ta):
        raise DataError("lookahead exceeds target array length")
    m = _nearest_index(x, ta, cfg, state)
    cands = _candidate_indices(m, ta, cfg.lookahead)
    e_all = x - ta.points[cands]                      # (N, d)
    drift_all = f_x - ta.velocities[cands]
    v_all = np.einsum("ij,ij->i", e_all, e_all)
    a_all = 2.0 * e_all
    rows, min_b = _barrier_rows(cs, x)

    if not rows:
        # closed form per candidate, vectorized
        b = -cfg.alpha_gain * v_all - np.einsum("ij,ij->i", a_all, drift_all)
        aa = np.einsum("ij,ij->i", a_all, a_all)
        u_all = np.zeros_like(e_all)
        active = (b < 0.0) & (aa > 0.0)
        u_all[active] = (b[active] / aa[active])[:, None] * a_all[active]
        costs = np.einsum("ij,ij->i", u_all, u_all)
        best = int(np.argmin(costs))
        sol = solve_clf_closed_form(a_all[best], cfg.alpha_gain * v_all[best],
                                    drift_all[best])
        return m, cands, best, sol, costs.tolist(), min_b

    costs = np.full(len(cands), np.inf)
    sols: list[QpSolution | None] = [None] * len(cands)
    for i in range(len(cands)):
        sol = solve_clf_cbf(a_all[i], cfg.alpha_gain * v_all[i], drift_all[i],
                            f_x, rows, lam=cfg.lam)
        sols[i] = sol
        if sol.status == "optimal":
            costs[i] = float(sol.u @ sol.u)
    if not np.any(np.isfinite(costs)):
        raise PlanningInfeasible([s.status for s in sols if s is not None])
    best = int(np.argmin(costs))
    return m, cands, best, sols[best], costs.tolist(), min_b


def choose_target(x: np.ndarray, ta: TargetArray, model: MlpField,
                  cs: CertificateSet, cfg: PlannerConfig,
                  state: PlannerState | None = None
                  ) -> tuple[np.ndarray, int, QpSolution]:
    """Pick the lookahead candidate with the cheapest virtual control.

    Returns (target point, target index, the already-solved QpSolution for
    that candidate) so the caller never re-solves.
    """
    x = np.asarray(x, dtype=float)
    f_x = model.forward(x)
    m, cands, best, sol, _, _ = _choose(x, ta, f_x, cs, cfg, state)
    idx = int(cands[best])
    if state is not None:
        state.prev_index = idx
    return ta.points[idx], idx, sol


def _freeze_step(x: np.ndarray, f_x: np.ndarray, ta: TargetArray, m: int,
                 min_b: float, statuses: list[str]) -> PlanStep:
    target = ta.points[m]
    e = x - target
    # zero commanded velocity, expressed through u so xdot_ref = f + u holds
    u = -f_x
    return PlanStep(x=x, e=e, u=u, xdot_ref=np.zeros_like(x), target=target,
                    target_index=m, slack=0.0, status="infeasible",
                    diagnostics={"V": float(e @ e), "min_b": min_b,
                                 "nearest": m, "candidate_costs": [],
                                 "candidate_statuses": statuses})


def plan_step(x: np.ndarray, ta: TargetArray, model: MlpField,
              cs: CertificateSet, cfg: PlannerConfig,
              state: PlannerState | None = None) -> PlanStep:
    """One control tick: select a target, return u and xdot_ref = f(x) + u."""
    x = np.asarray(x, dtype=float)
    f_x = model.forward(x)
    try:
        m, cands, best, sol, costs, min_b = _choose(x, ta, f_x, cs, cfg, state)
    except PlanningInfeasible as exc:
        rows, min_b = _barrier_rows(cs, x)
        m = _nearest_index(x, ta, cfg, state)
        if state is not None:
            state.prev_index = m
        if cfg.infeasible_policy == "cbf_only" and rows:
            # drop the tracking row, keep safety hard: min |v|^2 s.t. CBF rows
            G = np.array([-gb for gb, _ in rows])
            h = np.array([gamma_b + float(gb @ f_x) for gb, gamma_b in rows])
            safe = solve_dense_qp(QpProblem(weights=np.ones(x.shape[0]), G=G, h=h))
            if safe.status == "optimal":
                u = safe.u
                target = ta.points[m]
                e = x - target
                return PlanStep(x=x, e=e, u=u, xdot_ref=f_x + u, target=target,
                                target_index=m, slack=0.0, status="cbf_only",
                                diagnostics={"V": float(e @ e), "min_b": min_b,
                                             "nearest": m, "candidate_costs": [],
                                             "candidate_statuses": exc.statuses})
        return _freeze_step(x, f_x, ta, m, min_b, exc.statuses)

    idx = int(cands[best])
    if state is not None:
        state.prev_index = idx
    target = ta.points[idx]
    e = x - target
    u = sol.u
    return PlanStep(x=x, e=e, u=u, xdot_ref=f_x + u, target=target,
                    target_index=idx, slack=float(sol.slack), status=sol.status,
                    diagnostics={"V": float(e @ e), "min_b": min_b, "nearest": int(m),
                                 "candidate_costs": costs,
                                 "kkt_residual": float(sol.kkt_residual),
                                 "active_set": list(sol.active_set)})
