import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from augablate.errors import ConfigError, ShapeError
from augablate.nn import functional as F
from augablate.optim import OptState, PRESETS, TrainConfig, lr_at_epoch, preset, sgd_step


def step(w, g, lr, **cfg):
    params = {"w": np.array([w], dtype=np.float64)}
    sgd_step(params, {"w": np.array([g], dtype=np.float64)}, OptState(), TrainConfig(**cfg), lr)
    return params["w"][0]


# -- schedules -----------------------------------------------------------------------

def test_allcnn_schedule():
    cfg = PRESETS["allcnn-cifar"]
    assert lr_at_epoch(cfg, 0) == 0.01
    assert lr_at_epoch(cfg, 199) == 0.01
    assert lr_at_epoch(cfg, 200) == pytest.approx(0.001, rel=1e-12)
    assert lr_at_epoch(cfg, 250) == pytest.approx(0.0001, rel=1e-12)
    assert lr_at_epoch(cfg, 349) == pytest.approx(0.00001, rel=1e-12)


def test_wrn_schedule():
    cfg = PRESETS["wrn-cifar"]
    assert lr_at_epoch(cfg, 130) == pytest.approx(0.004, rel=1e-12)
    assert cfg.nesterov and cfg.weight_decay == 0.0005


def test_empty_schedule_is_constant():
    cfg = TrainConfig(base_lr=0.3)
    assert {lr_at_epoch(cfg, e) for e in range(100)} == {0.3}


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_schedule_non_increasing(name):
    cfg = PRESETS[name]
    lrs = [lr_at_epoch(cfg, e) for e in range(cfg.epochs)]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))


def test_desk_preset_scaled_points():
    cfg = preset("desk")
    assert cfg.epochs == 40 and [e for e, _ in cfg.schedule] == [23, 29, 34]
    assert preset("desk", epochs=5).epochs == 5
    with pytest.raises(ConfigError):
        preset("nope")


@pytest.mark.parametrize("kwargs", [
    {"base_lr": 0}, {"momentum": 1.0}, {"momentum": -0.1}, {"weight_decay": -1e-3},
    {"batch_size": 0}, {"schedule": ((10, 0.1), (10, 0.1))}, {"schedule": ((20, 0.1), (5, 0.1))},
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


# -- updates -------------------------------------------------------------------------

def test_plain_sgd_example():
    assert step(1.0, 0.5, 0.1, momentum=0.0) == pytest.approx(0.95, abs=1e-15)


def test_pure_decay_example():
    assert step(1.0, 0.0, 0.1, momentum=0.0, weight_decay=0.001) == pytest.approx(0.9999, abs=1e-15)


def test_classical_momentum_hand_unrolled():
    mu, lr, g, w0 = 0.9, 0.1, 0.5, 2.0
    cfg = TrainConfig(momentum=mu)
    params, state = {"w": np.array([w0])}, OptState()
    for _ in range(3):
        sgd_step(params, {"w": np.array([g])}, state, cfg, lr)
    v1 = -lr * g
    v2 = mu * v1 - lr * g
    v3 = mu * v2 - lr * g
    assert abs(params["w"][0] - (w0 + v1 + v2 + v3)) <= 1e-12
    assert abs(state.velocity["w"][0] - v3) <= 1e-12


def test_nesterov_hand_unrolled():
    mu, lr, g, w0 = 0.9, 0.1, 0.5, 2.0
    cfg = TrainConfig(momentum=mu, nesterov=True)
    params, state = {"w": np.array([w0])}, OptState()
    w, v = w0, 0.0
    for _ in range(3):
        sgd_step(params, {"w": np.array([g])}, state, cfg, lr)
        v = mu * v - lr * g
        w = w + mu * v - lr * g
    assert abs(params["w"][0] - w) <= 1e-12


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(1e-4, 1.0))
@settings(max_examples=50, deadline=None)
def test_no_momentum_no_decay_is_vanilla(w, g, lr):
    assert step(w, g, lr, momentum=0.0) == w - lr * g


@given(st.floats(-10, 10), st.floats(1e-4, 1.0), st.floats(1e-5, 0.1))
@settings(max_examples=50, deadline=None)
def test_decay_never_grows_magnitude(w, lr, lam):
    assert abs(step(w, 0.0, lr, momentum=0.0, weight_decay=lam)) <= abs(w)


def test_coupled_decay_matches_augmented_objective():
    # loss(w) = 3 (w - 1)^2 ; augmented = loss + lam/2 w^2
    lam, lr, w0, eps = 0.01, 0.05, 0.7, 1e-6

    def augmented(w):
        return 3 * (w - 1) ** 2 + lam / 2 * w ** 2

    fd = (augmented(w0 + eps) - augmented(w0 - eps)) / (2 * eps)
    got = step(w0, 6 * (w0 - 1), lr, momentum=0.0, weight_decay=lam)
    assert abs(got - (w0 - lr * fd)) <= 1e-9


def test_decay_restricted_to_named_params():
    params = {"kernel": np.ones(2), "beta": np.ones(2)}
    grads = {k: np.zeros(2) for k in params}
    F.reset_counters()
    sgd_step(params, grads, OptState(), TrainConfig(momentum=0.0, weight_decay=0.1), 1.0, decayed={"kernel"})
    assert np.allclose(params["kernel"], 0.9) and np.all(params["beta"] == 1)
    assert F.counters["weight_decay_updates"] == 1


def test_velocity_mirrors_shapes_and_shape_error():
    params = {"a": np.zeros((2, 3)), "b": np.zeros(4)}
    state = OptState()
    sgd_step(params, {k: np.ones_like(v) for k, v in params.items()}, state, TrainConfig(), 0.1)
    assert {k: v.shape for k, v in state.velocity.items()} == {"a": (2, 3), "b": (4,)}
    with pytest.raises(ShapeError):
        sgd_step(params, {"a": np.ones(6), "b": np.ones(4)}, state, TrainConfig(), 0.1)
