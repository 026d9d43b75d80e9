"""Min-norm virtual-control solvers.

Two routes, matching how the planner uses them:

* ``solve_clf_closed_form`` - the obstacle-free controller. One halfspace
  constraint grad_V . (drift + v) <= -alpha(V) admits a closed form: v = 0
  when the constraint is slack, otherwise the projection of 0 onto the
  constraint boundary.

* ``solve_clf_cbf`` - with barriers. Decision z = (v, eps): minimize
  |v|^2 + lambda * eps^2 subject to one soft tracking row
  grad_V . v - eps <= -alpha(V) - grad_V . drift and one hard row per barrier
  -grad_B . v <= gamma(B) + grad_B . f(x). Solved by a dense active-set
  method on the diagonal quadratic.

The active-set scheme works dual-side on the strictly convex problem: start
at the unconstrained optimum z = 0, repeatedly pick the most-violated row
(ties: lowest index), and step toward making it tight while keeping the
current working set tight, dropping working rows whose multipliers would go
negative along the way. When the incoming row's normal is dependent on the
working set and no multiplier blocks, the constraints admit no common point
and the solver reports "infeasible" with the certificate rows; an iteration
cap turns any numerical stall into an explicit "infeasible" status instead
of a hang (never a wrong "optimal").
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DataError

MAX_CONSTRAINTS = 16


@dataclass
class QpProblem:
    """minimize z^T diag(weights) z  s.t.  G z <= h."""

    weights: np.ndarray
    G: np.ndarray
    h: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if w.ndim != 1 or np.any(w <= 0):
            raise DataError("weights must be a 1-d positive array")
        if G.shape != (h.shape[0], w.shape[0]):
            raise DataError(f"G shape {G.shape} inconsistent with h/weights")
        if G.shape[0] > MAX_CONSTRAINTS:
            raise DataError(
                f"{G.shape[0]} constraint rows exceed the supported maximum "
                f"of {MAX_CONSTRAINTS}")
        self.weights, self.G, self.h = w, G, h

    def objective(self, z: np.ndarray) -> float:
        return float(np.dot(self.weights * z, z))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "G": self.G.tolist(),
                "h": self.h.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class QpSolution:
    u: np.ndarray            # control part of the decision (full z for raw solves)
    slack: float
    active_set: tuple[int, ...]
    kkt_residual: float
    status: str              # "optimal" | "infeasible"
    iterations: int = 0
    objective: float = 0.0
    message: str = ""

    def to_dict(self) -> dict:
        return {"u": self.u.tolist(), "slack": self.slack,
                "active_set": list(self.active_set),
                "kkt_residual": self.kkt_residual, "status": self.status,
                "iterations": self.iterations, "objective": self.objective,
                "message": self.message}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _kkt_residual(w: np.ndarray, G: np.ndarray, h: np.ndarray,
                  z: np.ndarray, mu: np.ndarray) -> float:
    stat = float(np.max(np.abs(2.0 * w * z + G.T @ mu))) if G.size else \
        float(np.max(np.abs(2.0 * w * z)))
    resid = G @ z - h
    feas = float(max(0.0, resid.max())) if resid.size else 0.0
    comp = float(np.max(np.abs(mu * resid))) if resid.size else 0.0
    dual = float(max(0.0, -mu.min())) if mu.size else 0.0
    return max(stat, feas, comp, dual)


def solve_dense_qp(p: QpProblem, max_iter: int = 200,
                   feas_tol: float = 1e-9) -> QpSolution:
    """Dual active-set solve of the diagonal strictly convex QP.

    Starts at the unconstrained optimum z = 0 and enforces the most-violated
    row at a time. Keeping the working set tight, it takes the largest step
    toward the incoming row that no working multiplier blocks, dropping the
    blocking row otherwise. Infeasibility is certified when the incoming
    normal is linearly dependent on the working set with no blocking
    multiplier. Status "infeasible" is also returned at the iteration cap;
    "optimal" is only ever returned with a verified KKT point.
    """
    w, G, h = p.weights, p.G, p.h
    n, m = w.shape[0], h.shape[0]
    hinv = 0.5 / w                      # H = 2 diag(w), so H^-1 = diag(1/2w)
    scale = 1.0 + float(np.max(np.abs(h))) if m else 1.0
    z = np.zeros(n)
    work: list[int] = []
    mu: list[float] = []
    it = 0

    def finish_infeasible(rows, msg):
        return QpSolution(u=z.copy(), slack=0.0,
                          active_set=tuple(sorted(rows)),
                          kkt_residual=np.inf, status="infeasible",
                          iterations=it, objective=p.objective(z),
                          message=msg)

    while True:
        it += 1
        if it > max_iter:
            return finish_infeasible(work, f"iteration cap {max_iter} exceeded")
        viol = G @ z - h
        if work:
            viol[work] = -np.inf        # working rows are tight by invariant
        j = int(np.argmax(viol)) if m else 0
        if m == 0 or viol[j] <= feas_tol * scale:
            mu_full = np.zeros(m)
            if work:
                mu_full[work] = np.maximum(mu, 0.0)
            return QpSolution(u=z, slack=0.0, active_set=tuple(sorted(work)),
                              kkt_residual=_kkt_residual(w, G, h, z, mu_full),
                              status="optimal", iterations=it,
                              objective=p.objective(z))

        nplus = -G[j]                   # incoming constraint as n+ . z >= -h_j
        s = float(nplus @ z + h[j])     # negative while row j is violated
        mu_plus = 0.0
        while True:
            it += 1
            if it > max_iter:
                return finish_infeasible(work + [j],
                                         f"iteration cap {max_iter} exceeded")
            if work:
                N = -G[np.array(work)].T            # active normals, n x k
                HiN = hinv[:, None] * N
                M = N.T @ HiN
                rhs = N.T @ (hinv * nplus)
                try:
                    r = np.linalg.solve(M, rhs)
                except np.linalg.LinAlgError:
                    r = np.linalg.lstsq(M, rhs, rcond=None)[0]
                d = hinv * (nplus - N @ r)
            else:
                r = np.zeros(0)
                d = hinv * nplus

            # blocking dual step: first working multiplier to hit zero
            t1 = np.inf
            k_block = -1
            for idx in range(len(work)):
                if r[idx] > 1e-12:
                    cand = mu[idx] / r[idx]
                    if cand < t1:
                        t1, k_block = cand, idx

            denom = float(nplus @ d)
            dependent = (float(np.linalg.norm(d))
                         <= 1e-10 * (1.0 + float(np.linalg.norm(hinv * nplus)))
                         or denom <= 0.0)
            if dependent:
                if not np.isfinite(t1):
                    rows = sorted(set(work) | {j})
                    return finish_infeasible(
                        rows, f"rows {rows} admit no common solution")
                # dual-only step: transfer multiplier mass, drop the blocker
                for idx in range(len(work)):
                    mu[idx] -= t1 * r[idx]
                mu_plus += t1
                work.pop(k_block)
                mu.pop(k_block)
                continue

            t2 = -s / denom             # step that makes row j tight
            t = min(t1, t2)
            z = z + t * d
            for idx in range(len(work)):
                mu[idx] -= t * r[idx]
            mu_plus += t
            s += t * denom
            if t2 <= t1:
                work.append(j)
                mu.append(mu_plus)
                break                   # row j enforced; back to violation scan
            work.pop(k_block)
            mu.pop(k_block)


def solve_clf_closed_form(grad_v: np.ndarray, alpha_v: float,
                          drift: np.ndarray) -> QpSolution:
    """min |v|^2 s.t. grad_v . (drift + v) <= -alpha_v, in closed form.

    With a = grad_v and b = -alpha_v - a . drift: v = 0 when b >= 0, else
    v = (b / |a|^2) a. Infeasible only when a = 0 and b < 0, which cannot
    occur for V = |e|^2 with a linear rate (e = 0 forces b = 0); the branch
    is defensive.
    """
    a = np.asarray(grad_v, dtype=float)
    drift = np.asarray(drift, dtype=float)
    b = -float(alpha_v) - float(a @ drift)
    if b >= 0.0:
        u = np.zeros_like(a)
        return QpSolution(u=u, slack=0.0, active_set=(), kkt_residual=0.0,
                          status="optimal", iterations=0, objective=0.0)
    aa = float(a @ a)
    if aa <= 0.0:
        return QpSolution(u=np.zeros_like(a), slack=0.0, active_set=(),
                          kkt_residual=np.inf, status="infeasible",
                          message="zero tracking gradient with negative margin")
    u = (b / aa) * a
    # KKT check: 2u + mu a = 0 with mu = -2b/|a|^2 > 0; constraint tight.
    mu = -2.0 * b / aa
    stat = float(np.max(np.abs(2.0 * u + mu * a)))
    return QpSolution(u=u, slack=0.0, active_set=(0,), kkt_residual=stat,
                      status="optimal", iterations=1,
                      objective=float(u @ u))


def build_clf_cbf_qp(grad_v: np.ndarray, alpha_v: float, drift: np.ndarray,
                     f_at_x: np.ndarray,
                     barriers: Sequence[tuple[np.ndarray, float]],
                     lam: float = 100.0) -> QpProblem:
    """Assemble the relaxed tracking/safety QP over z = (v, eps).

    `barriers` holds (grad_B, gamma(B)) pairs; every barrier becomes a hard
    row, the tracking condition is softened by the slack eps with penalty
    lambda * eps^2.
    """
    if lam <= 0:
        raise DataError("lambda must be positive (slack is always penalized)")
    a = np.asarray(grad_v, dtype=float)
    d = a.shape[0]
    nb = len(barriers)
    G = np.zeros((1 + nb, d + 1))
    h = np.zeros(1 + nb)
    G[0, :d] = a
    G[0, d] = -1.0
    h[0] = -float(alpha_v) - float(a @ drift)
    for i, (gb, gamma_b) in enumerate(barriers):
        gb = np.asarray(gb, dtype=float)
        G[1 + i, :d] = -gb
        h[1 + i] = float(gamma_b) + float(gb @ f_at_x)
    weights = np.ones(d + 1)
    weights[d] = lam
    return QpProblem(weights=weights, G=G, h=h)


def _tracking_only_optimum(p: QpProblem, lam: float) -> QpSolution | None:
    """Closed-form minimizer when only the soft tracking row can bind.

    With z = (v, eps) and row 0 = [a, -1], the optimum ignoring the hard
    rows is z = 0 for h0 >= 0 and otherwise the boundary projection
    mu = -2 h0 / (|a|^2 + 1/lambda), v = -mu a / 2, eps = mu / (2 lambda).
    If that point satisfies every hard row, those rows take zero
    multipliers, the full KKT system holds, and convexity makes it the
    global optimum; otherwise returns None and the caller must iterate.
    """
    dpl = p.G.shape[1]
    d = dpl - 1
    a = p.G[0, :d]
    h0 = float(p.h[0])
    z = np.zeros(dpl)
    mu = np.zeros(p.G.shape[0])
    if h0 < 0.0:
        mu0 = -2.0 * h0 / (float(a @ a) + 1.0 / lam)
        z[:d] = -0.5 * mu0 * a
        z[d] = 0.5 * mu0 / lam
        mu[0] = mu0
        active: tuple[int, ...] = (0,)
        iters = 1
    else:
        active = ()
        iters = 0
    if p.G.shape[0] > 1 and float(np.max(p.G[1:] @ z - p.h[1:])) > 0.0:
        return None
    return QpSolution(u=z, slack=0.0, active_set=active,
                      kkt_residual=_kkt_residual(p.weights, p.G, p.h, z, mu),
                      status="optimal", iterations=iters,
                      objective=p.objective(z))


def solve_clf_cbf(grad_v: np.ndarray, alpha_v: float, drift: np.ndarray,
                  f_at_x: np.ndarray,
                  barriers: Sequence[tuple[np.ndarray, float]],
                  lam: float = 100.0) -> QpSolution:
    """Solve the relaxed QP; returns u = v-part with the slack split out."""
    p = build_clf_cbf_qp(grad_v, alpha_v, drift, f_at_x, barriers, lam)
    sol = _tracking_only_optimum(p, lam)
    if sol is None:
        sol = solve_dense_qp(p)
    d = grad_v.shape[0] if hasattr(grad_v, "shape") else len(grad_v)
    return QpSolution(u=sol.u[:d], slack=float(sol.u[d]),
                      active_set=sol.active_set, kkt_residual=sol.kkt_residual,
                      status=sol.status, iterations=sol.iterations,
                      objective=sol.objective, message=sol.message)
