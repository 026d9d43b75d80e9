"""Shared fixtures: one small trained model reused across test modules.

Training is the slow part of the suite, so the circle model is session
scoped; tests must not mutate it (MlpField is treated as frozen by
convention: set_params is only for optimizers).
"""
import numpy as np
import pytest

from nodeplan import TrainConfig, generate_target_array, synth, train


@pytest.fixture(scope="session")
def circle_demos():
    return synth.limit_cycle_demos(n_demos=4, duration=4.0, noise=0.002, seed=1)


@pytest.fixture(scope="session")
def circle_model(circle_demos):
    model, report = train(circle_demos,
                          TrainConfig(epochs=200, hidden=(32, 32), seed=0))
    assert report.final_loss < 1e-2
    return model


@pytest.fixture(scope="session")
def circle_target(circle_model, circle_demos):
    ta = generate_target_array(circle_model, circle_demos.demos[0].states[0],
                               span=2 * np.pi, dt=1e-3)
    assert ta.periodic
    return ta
