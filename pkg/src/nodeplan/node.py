"""Neural ODE vector field: model, training, checkpoints, target arrays.

The model is a plain MLP x -> xdot wrapped with per-coordinate input
standardization. Training fits position sequences only (no velocity labels):
each window of a demonstration is rolled out with fixed-step RK4 from the
window's first data point and the mean squared position error is
backpropagated exactly through the integration steps (reverse-mode on the
discretized rollout, not a continuous adjoint).
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core import DataError, DemonstrationSet, TargetArray, Trajectory, resample, validate_demo_set
from .integrate import IntegrationError, dopri5


class TrainingError(RuntimeError):
    """Training diverged or produced non-finite values."""


def _tanh(p: np.ndarray) -> np.ndarray:
    return np.tanh(p)


def _tanh_deriv(p: np.ndarray) -> np.ndarray:
    t = np.tanh(p)
    return 1.0 - t * t


def _softplus(p: np.ndarray) -> np.ndarray:
    # stable: log(1+e^p) = max(p,0) + log1p(e^-|p|)
    return np.maximum(p, 0.0) + np.log1p(np.exp(-np.abs(p)))


def _softplus_deriv(p: np.ndarray) -> np.ndarray:
    out = np.empty_like(p)
    np.exp(-np.abs(p), out=out)
    pos = p >= 0
    out[pos] = 1.0 / (1.0 + out[pos])
    out[~pos] = out[~pos] / (1.0 + out[~pos])
    return out


_ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "tanh": (_tanh, _tanh_deriv),
    "softplus": (_softplus, _softplus_deriv),
}


@dataclass
class MlpField:
    """MLP vector field with input standardization baked in.

    forward(x) = sigma * g((x - mu) / sigma) where g is the raw MLP, so the
    public field lives in raw data units while the weights see standardized
    inputs. weights[l] has shape (n_in, n_out); parameters flatten in layer
    order as [W0.ravel(), b0, W1.ravel(), b1, ...].
    """

    layer_sizes: tuple[int, ...]
    activation: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    mu: np.ndarray
    sigma: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.activation not in _ACTIVATIONS:
            raise DataError(f"unknown activation {self.activation!r}")
        if len(self.layer_sizes) < 2 or self.layer_sizes[0] != self.layer_sizes[-1]:
            raise DataError("layer_sizes must map the state dimension to itself")

    # -- parameter vector ---------------------------------------------------

    @property
    def dim(self) -> int:
        return int(self.layer_sizes[0])

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_params(self) -> np.ndarray:
        return np.concatenate(
            [np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)]
        )

    def set_params(self, theta: np.ndarray) -> None:
        if theta.shape != (self.n_params,):
            raise DataError(f"expected {self.n_params} parameters, got {theta.shape}")
        off = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = theta[off:off + w.size].reshape(w.shape)
            off += w.size
            b[...] = theta[off:off + b.size]
            off += b.size

    # -- evaluation ----------------------------------------------------------

    def _core(self, z: np.ndarray) -> np.ndarray:
        act = _ACTIVATIONS[self.activation][0]
        a = z
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if l != last:
                a = act(a)
        return a

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Field value(s) in raw units; accepts (d,) or (B, d)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        z = (np.atleast_2d(x) - self.mu) / self.sigma
        out = self._core(z) * self.sigma
        return out[0] if single else out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def lipschitz_bound(self) -> float:
        """Upper bound on the field's Lipschitz constant from weight norms
        (both activations have slope <= 1)."""
        prod = 1.0
        for w in self.weights:
            prod *= float(np.linalg.norm(w, 2))
        return float(np.max(self.sigma)) * prod * float(np.max(1.0 / self.sigma))

    # -- checkpointing --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "mlp-field",
            "version": 1,
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "params": self.get_params().tolist(),
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "seed": int(self.seed),
            "meta": self.meta,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True,
                                         separators=(",", ":")))

    @classmethod
    def from_dict(cls, obj: dict) -> "MlpField":
        if obj.get("format") != "mlp-field":
            raise DataError("not a model checkpoint (missing format tag)")
        if int(obj.get("version", -1)) != 1:
            raise DataError(f"unsupported checkpoint version {obj.get('version')}")
        model = init_mlp(tuple(int(s) for s in obj["layer_sizes"]),
                         activation=str(obj["activation"]), seed=int(obj["seed"]))
        model.set_params(np.asarray(obj["params"], dtype=float))
        model.mu = np.asarray(obj["mu"], dtype=float)
        model.sigma = np.asarray(obj["sigma"], dtype=float)
        model.meta = dict(obj.get("meta", {}))
        return model

    @classmethod
    def load(cls, path: str | Path) -> "MlpField":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid checkpoint JSON: {exc}") from exc
        return cls.from_dict(obj)


def init_mlp(layer_sizes: tuple[int, ...], activation: str = "tanh",
             seed: int = 0) -> MlpField:
    """Fresh model, weights ~ N(0, 1/fan_in), zero biases, identity scaling."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    d = layer_sizes[0]
    return MlpField(layer_sizes=tuple(layer_sizes), activation=activation,
                    weights=weights, biases=biases,
                    mu=np.zeros(d), sigma=np.ones(d), seed=seed)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    window_len: int = 20
    window_stride: int = 10
    train_step: float = 0.0   # <=0: one RK4 step per data interval
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise DataError(f"unknown optimizer {self.optimizer!r}")
        if self.window_len != 0 and self.window_len < 2:
            raise DataError("window_len must be 0 (full demos) or >= 2")
        if self.window_stride < 1:
            raise DataError("window_stride must be >= 1")


@dataclass
class TrainReport:
    loss_history: list[float]
    final_loss: float
    wall_time: float
    lr_halvings: int = 0

    def to_dict(self) -> dict:
        return {
            "loss_history": self.loss_history,
            "final_loss": self.final_loss,
            "wall_time": self.wall_time,
            "lr_halvings": self.lr_halvings,
        }


# ---------------------------------------------------------------------------
# exact reverse-mode gradient through the windowed RK4 rollout
# ---------------------------------------------------------------------------


def _mlp_forward_cached(model: MlpField, z: np.ndarray):
    """Core MLP forward in standardized space, keeping pre-activations."""
    act = _ACTIVATIONS[model.activation][0]
    pres = []
    a = z
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        p = a @ w + b
        pres.append(p)
        a = act(p) if l != last else p
    return a, pres


def _mlp_vjp(model: MlpField, z: np.ndarray, pres: list[np.ndarray],
             g: np.ndarray, grads: list[np.ndarray]) -> np.ndarray:
    """Accumulate d(loss)/d(params) into `grads` (one array per W/b, ordered
    W0,b0,W1,b1,...) and return d(loss)/dz for adjoint g on the output."""
    act, actd = _ACTIVATIONS[model.activation]
    last = len(model.weights) - 1
    da = g
    dz = None
    for l in range(last, -1, -1):
        dp = da if l == last else da * actd(pres[l])
        a_in = z if l == 0 else act(pres[l - 1])
        grads[2 * l] += a_in.T @ dp
        grads[2 * l + 1] += dp.sum(axis=0)
        da = dp @ model.weights[l].T
    dz = da
    return dz


def _rk4_stage_inputs(model: MlpField, s: np.ndarray, h: float):
    """One batched RK4 step in standardized space; returns (next, stage inputs)."""
    k1, _ = _mlp_forward_cached(model, s)
    x2 = s + (0.5 * h) * k1
    k2, _ = _mlp_forward_cached(model, x2)
    x3 = s + (0.5 * h) * k2
    k3, _ = _mlp_forward_cached(model, x3)
    x4 = s + h * k3
    k4, _ = _mlp_forward_cached(model, x4)
    s_next = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return s_next, (s, x2, x3, x4)


def _rk4_step_vjp(model: MlpField, cache, h: float, g: np.ndarray,
                  grads: list[np.ndarray]) -> np.ndarray:
    """Adjoint of one RK4 step: g is dL/d(output); returns dL/d(input)."""
    s, x2, x3, x4 = cache
    gk1 = (h / 6.0) * g
    gk2 = (h / 3.0) * g
    gk3 = (h / 3.0) * g
    gk4 = (h / 6.0) * g
    gs = g.copy()

    _, pres = _mlp_forward_cached(model, x4)
    dx4 = _mlp_vjp(model, x4, pres, gk4, grads)
    gs += dx4
    gk3 += h * dx4

    _, pres = _mlp_forward_cached(model, x3)
    dx3 = _mlp_vjp(model, x3, pres, gk3, grads)
    gs += dx3
    gk2 += (0.5 * h) * dx3

    _, pres = _mlp_forward_cached(model, x2)
    dx2 = _mlp_vjp(model, x2, pres, gk2, grads)
    gs += dx2
    gk1 += (0.5 * h) * dx2

    _, pres = _mlp_forward_cached(model, s)
    ds = _mlp_vjp(model, s, pres, gk1, grads)
    gs += ds
    return gs


def _window_starts(n: int, window_len: int, stride: int) -> list[int]:
    if window_len == 0 or window_len >= n:
        return [0]
    starts = list(range(0, n - window_len + 1, stride))
    if starts[-1] != n - window_len:
        starts.append(n - window_len)  # cover the tail
    return starts


def _standardized_windows(model: MlpField, ds: DemonstrationSet, cfg: TrainConfig):
    """Group demo windows by (length, substep size, substep count) for batching.

    Returns dict key -> (data (B, L, d), row weights (B,)). Weights make the
    loss the mean over demos of each demo's per-point mean squared error, so
    demo duplication leaves the loss unchanged.
    """
    groups: dict[tuple, list] = {}
    m = len(ds)
    for tr in ds:
        dt = float(tr.times[1] - tr.times[0])
        if not tr.is_uniform(1e-6):
            raise DataError("training requires uniformly sampled demos; resample first")
        z = (tr.states - model.mu) / model.sigma
        n = z.shape[0]
        length = n if cfg.window_len == 0 else min(cfg.window_len, n)
        starts = _window_starts(n, cfg.window_len, cfg.window_stride)
        n_sub = 1 if cfg.train_step <= 0 else max(1, int(np.ceil(dt / cfg.train_step - 1e-12)))
        h = dt / n_sub
        w_row = 1.0 / (m * len(starts) * length)
        key = (length, round(h, 15), n_sub)
        bucket = groups.setdefault(key, [])
        for s0 in starts:
            bucket.append((z[s0:s0 + length], w_row))
    out = {}
    for key, rows in groups.items():
        data = np.stack([r[0] for r in rows])
        weights = np.array([r[1] for r in rows])
        out[key] = (data, weights)
    return out


def loss_and_grad(model: MlpField, ds: DemonstrationSet,
                  cfg: TrainConfig) -> tuple[float, np.ndarray]:
    """Mean squared position error of windowed RK4 rollouts and its exact
    gradient w.r.t. the flattened parameters.

    The loss is computed on standardized coordinates (the quantity actually
    optimized); each window is rolled out from its first data point, and the
    window-start samples count as (zero-error) terms in the mean, matching a
    per-demo, per-timestep average.
    """
    validate_demo_set(ds)
    if ds.dim != model.dim:
        raise DataError(f"model dim {model.dim} != data dim {ds.dim}")
    groups = _standardized_windows(model, ds, cfg)
    grads = []
    for w, b in zip(model.weights, model.biases):
        grads.append(np.zeros_like(w))
        grads.append(np.zeros_like(b))
    loss = 0.0
    for (length, h, n_sub), (data, w_rows) in groups.items():
        s = data[:, 0, :].copy()
        caches: list[list] = []  # caches[j][i] = stage inputs of substep i of interval j
        preds = []
        for j in range(1, length):
            step_caches = []
            for _ in range(n_sub):
                s, cache = _rk4_stage_inputs(model, s, h)
                step_caches.append(cache)
            caches.append(step_caches)
            preds.append(s)
        errs = [p - data[:, j + 1, :] for j, p in enumerate(preds)]
        loss += float(sum(np.sum(w_rows[:, None] * e * e) for e in errs))
        if not np.isfinite(loss):
            raise TrainingError("rollout produced non-finite loss")
        adj = np.zeros_like(s)
        for j in range(length - 2, -1, -1):
            adj = adj + 2.0 * w_rows[:, None] * errs[j]
            for cache in reversed(caches[j]):
                adj = _rk4_step_vjp(model, cache, h, adj, grads)
    flat = np.concatenate([g.ravel() for g in grads])
    if not np.all(np.isfinite(flat)):
        raise TrainingError("gradient is non-finite")
    return loss, flat


def train(ds: DemonstrationSet, cfg: TrainConfig | None = None) -> tuple[MlpField, TrainReport]:
    """Fit an MLP field to the demo set; returns the best model seen.

    Non-uniformly sampled demos are resampled to their own median spacing
    first. On a non-finite loss the optimizer restores the best parameters,
    halves the learning rate and retries; after 3 halvings the error
    propagates.
    """
    cfg = cfg or TrainConfig()
    validate_demo_set(ds)
    demos = []
    for tr in ds:
        if tr.is_uniform(1e-6):
            demos.append(tr)
        else:
            # snap the spacing to an exact divisor of the span so the
            # resampled grid is uniform through the final sample
            med = float(np.median(np.diff(tr.times)))
            n_steps = max(1, int(round(tr.duration / med)))
            demos.append(resample(tr, tr.duration / n_steps))
    ds = DemonstrationSet(demos=tuple(demos), name=ds.name)

    all_states = np.concatenate([tr.states for tr in ds], axis=0)
    mu = all_states.mean(axis=0)
    sigma = np.maximum(all_states.std(axis=0), 1e-8)

    d = ds.dim
    model = init_mlp((d, *cfg.hidden, d), activation=cfg.activation, seed=cfg.seed)
    model.mu = mu
    model.sigma = sigma
    model.meta = {"train_x0": ds.demos[0].states[0].tolist(), "data_name": ds.name}

    theta = model.get_params()
    m_t = np.zeros_like(theta)
    v_t = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = cfg.learning_rate
    halvings = 0
    best_loss = np.inf
    best_theta = theta.copy()
    history: list[float] = []
    t0 = time.monotonic()
    step = 0
    epoch = 0
    while epoch < cfg.epochs:
        model.set_params(theta)
        try:
            loss, grad = loss_and_grad(model, ds, cfg)
        except TrainingError:
            halvings += 1
            if halvings > 3:
                raise
            lr *= 0.5
            theta = best_theta.copy()
            m_t[:] = 0.0
            v_t[:] = 0.0
            step = 0
            continue
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_theta = theta.copy()
        step += 1
        if cfg.optimizer == "adam":
            m_t = beta1 * m_t + (1 - beta1) * grad
            v_t = beta2 * v_t + (1 - beta2) * grad * grad
            m_hat = m_t / (1 - beta1 ** step)
            v_hat = v_t / (1 - beta2 ** step)
            theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        else:
            theta = theta - lr * grad
        epoch += 1
    model.set_params(best_theta)
    report = TrainReport(loss_history=history, final_loss=float(best_loss),
                         wall_time=time.monotonic() - t0, lr_halvings=halvings)
    return model, report


def generate_target_array(model: MlpField, x0: np.ndarray, span: float,
                          dt: float, closure_rtol: float = 0.05) -> TargetArray:
    """Integrate the learned field (adaptive stepper) and sample every dt.

    The array is flagged periodic when the endpoint returns to the start
    within closure_rtol of the point cloud's bounding-box diagonal; a
    zero-diameter array (fixed point) counts as periodic.
    """
    if dt <= 0:
        raise DataError("dt must be positive")
    if span < 2 * dt:
        raise DataError("span must cover at least 2 samples")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.dim,):
        raise DataError(f"x0 must have shape ({model.dim},)")
    n = int(np.floor(span / dt + 1e-9))
    times = dt * np.arange(n + 1)
    # pin the final sample to the full span so the array covers exactly the
    # requested horizon (mirrors the resampling grid convention)
    if abs(times[-1] - span) > 1e-12 * max(span, 1.0):
        times = np.append(times, span)
    else:
        times[-1] = span
    traj = dopri5(model.forward, x0, times)
    points = traj.states
    velocities = model.forward(points)
    span_box = points.max(axis=0) - points.min(axis=0)
    diameter = float(np.linalg.norm(span_box))
    closure = float(np.linalg.norm(points[0] - points[-1]))
    return TargetArray(points=points, velocities=velocities, dt=dt,
                       periodic=closure <= closure_rtol * diameter)
