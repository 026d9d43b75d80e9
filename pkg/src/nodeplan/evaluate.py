"""Reproduction quality metrics: exact DTW and train/test evaluation.

DTW here is the exact O(Ta*Tb) dynamic program with Euclidean local cost
and no banding; inputs longer than a few thousand samples should be
decimated by the caller (the metric itself stays exact for whatever it is
given).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DataError, DemonstrationSet, Trajectory, validate_demo_set
from .integrate import IntegrationError, dopri5
from .node import MlpField


@dataclass(frozen=True)
class DtwResult:
    cost: float
    path_length: int


def dtw(a: np.ndarray | Trajectory, b: np.ndarray | Trajectory) -> DtwResult:
    """Exact dynamic-time-warping alignment cost between two state sequences."""
    if isinstance(a, Trajectory):
        a = a.states
    if isinstance(b, Trajectory):
        b = b.states
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise DataError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    ta, tb = a.shape[0], b.shape[0]
    # local Euclidean costs, then the standard DP with a sequential row scan
    # (the in-row dependency on D[i, j-1] rules out full vectorization)
    diff = a[:, None, :] - b[None, :, :]
    local = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    big = np.inf
    acc = np.full((ta + 1, tb + 1), big)
    acc[0, 0] = 0.0
    for i in range(1, ta + 1):
        row = acc[i]
        prev = acc[i - 1]
        li = local[i - 1]
        left = big
        for j in range(1, tb + 1):
            best = prev[j]
            if prev[j - 1] < best:
                best = prev[j - 1]
            if left < best:
                best = left
            left = li[j - 1] + best
            row[j] = left
    # backtrack for the alignment length (diagonal preferred on ties)
    i, j = ta, tb
    length = 1
    while i > 1 or j > 1:
        moves = ((acc[i - 1, j - 1], i - 1, j - 1),
                 (acc[i - 1, j], i - 1, j),
                 (acc[i, j - 1], i, j - 1))
        _, i, j = min(moves, key=lambda m: m[0])
        length += 1
    return DtwResult(cost=float(acc[ta, tb]), path_length=length)


def pairwise_dtw(ds: DemonstrationSet) -> np.ndarray:
    """Symmetric matrix of DTW costs between all demo pairs."""
    n = len(ds)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            c = dtw(ds.demos[i].states, ds.demos[j].states).cost
            out[i, j] = out[j, i] = c
    return out


def mean_pairwise_dtw(ds: DemonstrationSet) -> float:
    n = len(ds)
    if n < 2:
        raise DataError("need at least 2 demos for a pairwise mean")
    m = pairwise_dtw(ds)
    iu = np.triu_indices(n, k=1)
    return float(m[iu].mean())


@dataclass
class EvalReport:
    per_demo: list[dict]
    train: dict | None
    test: dict | None
    reproductions: list[Trajectory | None] = field(default_factory=list)

    def to_dict(self, include_reproductions: bool = True) -> dict:
        out = {"per_demo": self.per_demo, "train": self.train, "test": self.test}
        if include_reproductions:
            out["reproductions"] = [
                None if r is None else
                {"times": r.times.tolist(), "states": r.states.tolist()}
                for r in self.reproductions
            ]
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw))


def _split_stats(costs: list[float]) -> dict | None:
    if not costs:
        return None
    arr = np.asarray(costs)
    # population variance (ddof=0)
    return {"mean_dtw": float(arr.mean()), "var_dtw": float(arr.var()),
            "count": int(arr.size)}


def evaluate_model(model: MlpField, ds: DemonstrationSet,
                   split: tuple[Sequence[int], Sequence[int]]) -> EvalReport:
    """Integrate the learned field from each demo's start and score with DTW.

    Demos whose integration fails are flagged and excluded from the split
    statistics. An empty split side reports None (absent), not zeros.
    """
    validate_demo_set(ds)
    train_idx, test_idx = [list(s) for s in split]
    all_idx = train_idx + test_idx
    # a demo may be listed twice on one side (doubling its weight); the same
    # demo on both sides would leak train data into the test statistics
    if set(train_idx) & set(test_idx):
        raise DataError("split sides overlap")
    for i in all_idx:
        if not 0 <= i < len(ds):
            raise DataError(f"split index {i} out of range (have {len(ds)} demos)")
    per_demo: list[dict] = []
    repros: list[Trajectory | None] = []
    costs = {"train": [], "test": []}
    for i in all_idx:
        part = "train" if i in train_idx else "test"
        demo = ds.demos[i]
        rec: dict = {"index": i, "split": part, "failed": False}
        try:
            repro = dopri5(model.forward, demo.states[0], demo.times)
            res = dtw(repro.states, demo.states)
            rec["dtw"] = res.cost
            rec["path_length"] = res.path_length
            costs[part].append(res.cost)
            repros.append(repro)
        except IntegrationError as exc:
            rec["failed"] = True
            rec["error"] = str(exc)
            repros.append(None)
        per_demo.append(rec)
    return EvalReport(per_demo=per_demo, train=_split_stats(costs["train"]),
                      test=_split_stats(costs["test"]), reproductions=repros)


def parse_split(text: str, n_demos: int) -> tuple[list[int], list[int]]:
    """Parse 'i,j,...:k,l,...' into (train, test); either side may be empty."""
    if ":" not in text:
        raise DataError("split must look like '0,1,2:3,4' (colon required)")
    left, right = text.split(":", 1)

    def side(s: str) -> list[int]:
        s = s.strip()
        if not s:
            return []
        try:
            idx = [int(tok) for tok in s.split(",") if tok.strip() != ""]
        except ValueError as exc:
            raise DataError(f"split indices must be integers: {exc}") from exc
        return idx

    train, test = side(left), side(right)
    for i in train + test:
        if not 0 <= i < n_demos:
            raise DataError(f"split index {i} out of range (have {n_demos} demos)")
    if set(train) & set(test):
        raise DataError("split sides overlap")
    return train, test


# --- tiny dependency-free SVG overlay plot ---------------------------------


def _polyline(points: np.ndarray, color: str, width: float, opacity: float) -> str:
    pts = " ".join(f"{p[0]:.4f},{p[1]:.4f}" for p in points)
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}" '
            f'stroke-opacity="{opacity}" points="{pts}" />')


def plot_overlays(ds: DemonstrationSet, report: EvalReport,
                  path: str | Path, size: int = 640) -> None:
    """Write an SVG overlaying demos (gray) and reproductions (colored).

    Only the first two state coordinates are drawn.
    """
    allpts = [tr.states[:, :2] for tr in ds]
    allpts += [r.states[:, :2] for r in report.reproductions if r is not None]
    stacked = np.concatenate(allpts, axis=0)
    lo = stacked.min(axis=0)
    hi = stacked.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    pad = 0.05

    def to_px(p: np.ndarray) -> np.ndarray:
        q = (p - lo) / span
        q = pad + q * (1 - 2 * pad)
        return np.column_stack([q[:, 0] * size, (1 - q[:, 1]) * size])

    colors = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e",
              "#17becf", "#bcbd22", "#e377c2"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white" />']
    for tr in ds:
        parts.append(_polyline(to_px(tr.states[:, :2]), "#888888", 1.0, 0.6))
    for k, r in enumerate(report.reproductions):
        if r is None:
            continue
        parts.append(_polyline(to_px(r.states[:, :2]),
                               colors[k % len(colors)], 1.5, 0.9))
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))
