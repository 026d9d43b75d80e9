"""Field model, exact training gradient, training behavior, target arrays."""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodeplan.core import DataError, DemonstrationSet, Trajectory
from nodeplan.integrate import dopri5
from nodeplan.node import (MlpField, TrainConfig, TrainingError, TrainReport,
                           generate_target_array, init_mlp, loss_and_grad,
                           train)
from nodeplan import synth


def _decay_demos(n_demos=2, dt=0.05, duration=3.0):
    """Exact solutions of xdot = -x from different starts."""
    times = np.arange(round(duration / dt) + 1) * dt
    demos = []
    for i, x0 in enumerate(np.linspace(-1.5, 1.5, n_demos)):
        if x0 == 0.0:
            x0 = 0.7
        states = (x0 * np.exp(-times))[:, None]
        demos.append(Trajectory(times=times, states=states))
    return DemonstrationSet(demos=tuple(demos), name="decay")


def _toy_demos(seed=0, n=12, d=2, n_demos=2, dt=0.1):
    rng = np.random.default_rng(seed)
    times = np.arange(n) * dt
    demos = tuple(
        Trajectory(times=times,
                   states=np.cumsum(rng.standard_normal((n, d)), axis=0) * 0.1)
        for _ in range(n_demos))
    return DemonstrationSet(demos=demos, name="toy")


def _fd_grad(model, ds, cfg, h=1e-5):
    theta0 = model.get_params()
    g = np.zeros_like(theta0)
    for i in range(theta0.size):
        for sgn in (+1, -1):
            theta = theta0.copy()
            theta[i] += sgn * h
            model.set_params(theta)
            loss, _ = loss_and_grad(model, ds, cfg)
            g[i] += sgn * loss
    model.set_params(theta0)
    return g / (2 * h)


class TestMlpField:
    def test_layer_validation(self):
        with pytest.raises(DataError, match="state dimension"):
            init_mlp((2, 8, 3))
        with pytest.raises(DataError, match="unknown activation"):
            init_mlp((2, 8, 2), activation="relu6")

    def test_param_vector_round_trip(self):
        m = init_mlp((2, 8, 2), seed=3)
        theta = m.get_params()
        assert theta.shape == (m.n_params,)
        m2 = init_mlp((2, 8, 2), seed=99)
        m2.set_params(theta)
        assert np.array_equal(m2.get_params(), theta)
        x = np.array([0.3, -0.2])
        assert np.array_equal(m.forward(x), m2.forward(x))

    def test_set_params_shape_checked(self):
        m = init_mlp((2, 4, 2))
        with pytest.raises(DataError, match="parameters"):
            m.set_params(np.zeros(3))

    def test_forward_batch_matches_single(self):
        m = init_mlp((3, 16, 3), seed=1)
        xs = np.random.default_rng(0).standard_normal((5, 3))
        batch = m.forward(xs)
        for i in range(5):
            # batched matmul may use a different BLAS path than the mat-vec,
            # so allow last-bit differences only
            assert np.allclose(batch[i], m.forward(xs[i]),
                               rtol=1e-14, atol=1e-16)

    def test_standardization_formula(self):
        m = init_mlp((2, 8, 2), seed=2)
        m.mu = np.array([1.0, -2.0])
        m.sigma = np.array([0.5, 4.0])
        x = np.array([0.2, 0.7])
        raw = init_mlp((2, 8, 2), seed=2)
        z = (x - m.mu) / m.sigma
        assert np.allclose(m.forward(x), m.sigma * raw.forward(z),
                           atol=0, rtol=0)

    def test_init_deterministic_per_seed(self):
        a = init_mlp((2, 8, 2), seed=5).get_params()
        b = init_mlp((2, 8, 2), seed=5).get_params()
        c = init_mlp((2, 8, 2), seed=6).get_params()
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), scale=st.floats(0.2, 3.0))
    def test_lipschitz_bound_holds_on_samples(self, seed, scale):
        rng = np.random.default_rng(seed)
        m = init_mlp((2, 8, 2), activation="tanh", seed=seed % 1000)
        m.sigma = np.array([scale, 1.0 / scale])
        lip = m.lipschitz_bound()
        x = rng.standard_normal(2)
        y = x + 1e-3 * rng.standard_normal(2)
        lhs = np.linalg.norm(m.forward(x) - m.forward(y))
        assert lhs <= lip * np.linalg.norm(x - y) * (1 + 1e-9)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = _toy_demos()
        model, _ = train(ds, TrainConfig(epochs=3, hidden=(8,), seed=0))
        p = tmp_path / "model.json"
        model.save(p)
        back = MlpField.load(p)
        assert np.array_equal(back.get_params(), model.get_params())
        assert np.array_equal(back.mu, model.mu)
        assert np.array_equal(back.sigma, model.sigma)
        assert back.meta == model.meta
        x = np.array([0.1, 0.2])
        assert np.array_equal(back.forward(x), model.forward(x))

    def test_format_tag_required(self):
        with pytest.raises(DataError, match="format tag"):
            MlpField.from_dict({"version": 1})

    def test_version_checked(self):
        with pytest.raises(DataError, match="unsupported checkpoint version"):
            MlpField.from_dict({"format": "mlp-field", "version": 2})

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("nope{")
        with pytest.raises(DataError, match="invalid checkpoint JSON"):
            MlpField.load(p)


class TestLossSemantics:
    def test_zero_model_loss_hand_formula(self):
        # with all parameters zero the rollout stays at each window start, so
        # the loss must equal the windowed mean of |x_w0 - x_wj|^2 including
        # the zero j=0 terms in the denominator
        ds = _toy_demos(seed=4, n=11, d=2, n_demos=3)
        cfg = TrainConfig(epochs=1, window_len=4, window_stride=3)
        model = init_mlp((2, 8, 2))
        model.set_params(np.zeros(model.n_params))
        loss, grad = loss_and_grad(model, ds, cfg)

        expect = 0.0
        m = len(ds)
        for tr in ds:
            n = len(tr.times)
            starts = list(range(0, n - 4 + 1, 3))
            if starts[-1] != n - 4:
                starts.append(n - 4)
            per_demo = 0.0
            for s0 in starts:
                win = tr.states[s0:s0 + 4]
                per_demo += np.sum((win[0] - win[1:]) ** 2)
            expect += per_demo / (len(starts) * 4)
        expect /= m
        assert np.isclose(loss, expect, rtol=1e-12)
        # zero parameters is a stationary point in the hidden weights but the
        # output bias gradient must be nonzero for non-constant data
        assert grad.shape == (model.n_params,)

    def test_zero_field_constant_demo_is_perfect_fit(self):
        times = np.arange(10) * 0.1
        tr = Trajectory(times=times, states=np.tile([0.3, -0.4], (10, 1)))
        ds = DemonstrationSet(demos=(tr,))
        model = init_mlp((2, 8, 2))
        model.set_params(np.zeros(model.n_params))
        loss, grad = loss_and_grad(model, ds, TrainConfig(epochs=1))
        assert loss == 0.0
        assert np.array_equal(grad, np.zeros_like(grad))

    def test_duplicating_demos_leaves_loss_unchanged(self):
        ds = _toy_demos(seed=7, n=15, d=2, n_demos=2)
        doubled = DemonstrationSet(demos=ds.demos + ds.demos, name="x2")
        model = init_mlp((2, 8, 2), seed=1)
        cfg = TrainConfig(epochs=1, window_len=5, window_stride=2)
        l1, g1 = loss_and_grad(model, ds, cfg)
        l2, g2 = loss_and_grad(model, doubled, cfg)
        assert np.isclose(l1, l2, rtol=1e-12)
        assert np.allclose(g1, g2, rtol=1e-9, atol=1e-15)

    def test_window_zero_means_full_demos(self):
        ds = _toy_demos(seed=9, n=9, d=2, n_demos=2)
        model = init_mlp((2, 8, 2), seed=2)
        full = TrainConfig(epochs=1, window_len=0)
        manual = TrainConfig(epochs=1, window_len=9, window_stride=1)
        l_full, _ = loss_and_grad(model, ds, full)
        l_manual, _ = loss_and_grad(model, ds, manual)
        assert np.isclose(l_full, l_manual, rtol=1e-12)

    def test_non_uniform_demos_rejected(self):
        tr = Trajectory(times=np.array([0.0, 0.1, 0.35]),
                        states=np.zeros((3, 1)) + [[0.0], [1.0], [2.0]])
        ds = DemonstrationSet(demos=(tr,))
        model = init_mlp((1, 4, 1))
        with pytest.raises(DataError, match="resample first"):
            loss_and_grad(model, ds, TrainConfig(epochs=1))

    def test_dim_mismatch_rejected(self):
        ds = _toy_demos(d=2)
        model = init_mlp((3, 4, 3))
        with pytest.raises(DataError, match="dim"):
            loss_and_grad(model, ds, TrainConfig(epochs=1))


class TestGradient:
    @pytest.mark.parametrize("activation", ["tanh", "softplus"])
    def test_matches_finite_differences_small_config(self, activation):
        # d=2, hidden 8, window 5: the documented gradient-check setup
        ds = _toy_demos(seed=11, n=14, d=2, n_demos=2)
        model = init_mlp((2, 8, 2), activation=activation, seed=3)
        cfg = TrainConfig(epochs=1, window_len=5, window_stride=3,
                          activation=activation)
        _, g = loss_and_grad(model, ds, cfg)
        fd = _fd_grad(model, ds, cfg, h=1e-5)
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-4

    def test_matches_finite_differences_with_substeps(self):
        ds = _toy_demos(seed=13, n=10, d=2, n_demos=2, dt=0.2)
        model = init_mlp((2, 8, 2), seed=5)
        cfg = TrainConfig(epochs=1, window_len=4, window_stride=2,
                          train_step=0.06)
        _, g = loss_and_grad(model, ds, cfg)
        fd = _fd_grad(model, ds, cfg, h=1e-5)
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-4

    def test_matches_finite_differences_full_demo_rollout(self):
        ds = _toy_demos(seed=17, n=8, d=1, n_demos=1)
        model = init_mlp((1, 6, 1), seed=7)
        cfg = TrainConfig(epochs=1, window_len=0)
        _, g = loss_and_grad(model, ds, cfg)
        fd = _fd_grad(model, ds, cfg, h=1e-5)
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-4


class TestTrain:
    def test_linear_decay_reaches_budget_loss(self):
        ds = _decay_demos()
        model, report = train(ds, TrainConfig(epochs=500, hidden=(16, 16),
                                              learning_rate=1e-2, seed=0))
        assert report.final_loss <= 1e-4
        assert len(report.loss_history) == 500
        assert all(v >= 0 for v in report.loss_history)
        # the learned field should match xdot = -x near the data
        x = np.array([0.8])
        assert np.allclose(model.forward(x), -x, atol=0.05)

    def test_deterministic_same_seed_bitwise(self, tmp_path):
        ds = _toy_demos(seed=21)
        cfg = TrainConfig(epochs=10, hidden=(8,), seed=4)
        m1, r1 = train(ds, cfg)
        m2, r2 = train(ds, cfg)
        assert r1.loss_history == r2.loss_history
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        m1.save(p1)
        m2.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_final_loss_is_best_seen(self):
        ds = _toy_demos(seed=23)
        model, report = train(ds, TrainConfig(epochs=30, hidden=(8,), seed=1))
        assert np.isclose(report.final_loss, min(report.loss_history))
        # returned parameters reproduce the reported loss
        loss, _ = loss_and_grad(model, ds, TrainConfig(epochs=1))
        assert np.isclose(loss, report.final_loss, rtol=1e-9)

    def test_non_uniform_demos_resampled(self):
        rng = np.random.default_rng(3)
        times = np.cumsum(rng.uniform(0.05, 0.15, size=30))
        tr = Trajectory(times=times, states=np.sin(times)[:, None])
        ds = DemonstrationSet(demos=(tr,))
        model, report = train(ds, TrainConfig(epochs=5, hidden=(8,)))
        assert len(report.loss_history) == 5

    def test_meta_records_training_start(self):
        ds = _toy_demos(seed=29)
        model, _ = train(ds, TrainConfig(epochs=2, hidden=(8,)))
        assert np.allclose(model.meta["train_x0"], ds.demos[0].states[0])

    def test_sgd_optimizer_runs(self):
        ds = _decay_demos()
        model, report = train(ds, TrainConfig(epochs=40, hidden=(8,),
                                              optimizer="sgd",
                                              learning_rate=0.05))
        assert report.loss_history[-1] < report.loss_history[0]

    def test_config_validation(self):
        with pytest.raises(DataError, match="epochs"):
            TrainConfig(epochs=0)
        with pytest.raises(DataError, match="learning_rate"):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(DataError, match="optimizer"):
            TrainConfig(optimizer="lbfgs")
        with pytest.raises(DataError, match="window_len"):
            TrainConfig(window_len=1)
        with pytest.raises(DataError, match="window_stride"):
            TrainConfig(window_stride=0)


class _RotationModel:
    """Analytic stand-in exposing the MlpField evaluation interface."""

    dim = 2

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.array([-x[1], x[0]])
        return np.stack([-x[:, 1], x[:, 0]], axis=1)


class TestGenerateTargetArray:
    def test_rotation_field_closes_and_flags_periodic(self):
        ta = generate_target_array(_RotationModel(), np.array([1.0, 0.0]),
                                   span=2 * np.pi, dt=1e-3)
        assert ta.periodic
        assert np.linalg.norm(ta.points[0] - ta.points[-1]) < 1e-4
        # grid: every dt, with the final sample pinned to the full span
        n = int(np.floor(2 * np.pi / 1e-3 + 1e-9))
        assert len(ta) == n + 2
        # velocities are the field evaluated at the points, exactly
        assert np.array_equal(ta.velocities,
                              _RotationModel().forward(ta.points))

    def test_decay_field_is_not_periodic(self):
        ds = _decay_demos()
        model, _ = train(ds, TrainConfig(epochs=120, hidden=(16,), seed=0))
        ta = generate_target_array(model, np.array([1.2]), span=3.0, dt=0.01)
        assert not ta.periodic

    def test_validation(self):
        m = _RotationModel()
        with pytest.raises(DataError, match="dt must be positive"):
            generate_target_array(m, np.array([1.0, 0.0]), span=1.0, dt=0.0)
        with pytest.raises(DataError, match="span"):
            generate_target_array(m, np.array([1.0, 0.0]), span=0.001, dt=0.01)
        with pytest.raises(DataError, match="x0 must have shape"):
            generate_target_array(m, np.array([1.0]), span=1.0, dt=0.01)


class TestCircleReproduction:
    def test_learned_cycle_stays_near_ring(self, circle_model):
        # integrate the learned field for three periods; the flow must stay
        # within 0.1 of the demonstrated ring (radius 0.5, omega 2)
        period = np.pi
        times = np.linspace(0.0, 3 * period, 600)
        tr = dopri5(circle_model.forward, np.array([0.5, 0.0]), times)
        radii = np.linalg.norm(tr.states, axis=1)
        assert np.max(np.abs(radii - 0.5)) < 0.1

    def test_duplication_invariance_after_training(self, circle_demos,
                                                   circle_model):
        cfg = TrainConfig(epochs=1, hidden=(32, 32))
        l1, _ = loss_and_grad(circle_model, circle_demos, cfg)
        doubled = DemonstrationSet(demos=circle_demos.demos * 2, name="x2")
        l2, _ = loss_and_grad(circle_model, doubled, cfg)
        assert np.isclose(l1, l2, rtol=1e-12)
