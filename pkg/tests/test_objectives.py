import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sentifuse import autodiff as ad
from sentifuse import objectives as O
from sentifuse.autodiff import finite_diff_check
from sentifuse.errors import ConfigError, ContractError, DegenerateVectorError, DimensionError
from sentifuse.gradcheck import CASES

vec = arrays(np.float64, 5, elements=st.floats(-5, 5))


def test_cross_entropy_examples():
    assert O.categorical_cross_entropy([0.5, 0.5], [1.0, 0.0]).value == pytest.approx(math.log(2), abs=1e-15)
    assert O.categorical_cross_entropy([1.0, 0.0], [1.0, 0.0]).value <= 1e-11
    big = O.categorical_cross_entropy([1e-12, 1.0 - 1e-12], [1.0, 0.0]).value
    assert big == pytest.approx(-math.log(1e-12)) and math.isfinite(big)
    assert O.categorical_cross_entropy([0.0, 1.0], [1.0, 0.0]).value == pytest.approx(27.631021, abs=1e-6)


def test_cross_entropy_contracts():
    with pytest.raises(ContractError):
        O.categorical_cross_entropy([0.5, 0.5], [0.5, 0.5])
    with pytest.raises(ContractError):
        O.categorical_cross_entropy([0.7, 0.7], [1.0, 0.0])
    with pytest.raises(DimensionError):
        O.categorical_cross_entropy([0.5, 0.5], [1.0, 0.0, 0.0])


def test_cross_entropy_batch_is_row_mean():
    p = np.array([[0.5, 0.5], [0.9, 0.1]])
    t = np.array([[1.0, 0.0], [1.0, 0.0]])
    expected = (math.log(2) - math.log(0.9)) / 2
    assert O.categorical_cross_entropy(p, t).value == pytest.approx(expected, rel=1e-14)


def test_cosine_proximity_examples():
    t = np.array([0.2, -1.0, 3.0])
    assert O.cosine_proximity(t, t).value == pytest.approx(-1.0, abs=1e-12)
    assert O.cosine_proximity(-t, t).value == pytest.approx(1.0, abs=1e-12)
    assert O.cosine_proximity([1.0, 0.0], [0.0, 2.0]).value == 0.0
    with pytest.raises(DegenerateVectorError):
        O.cosine_proximity([0.0, 0.0, 0.0], t)


def test_hinge_examples():
    assert O.hinge(np.ones(3), np.ones(3)).value == 0.0
    assert O.hinge(np.zeros(4), [0.3, -2.0, 1.0, 5.0]).value == 1.0
    assert O.hinge([2.0, -2.0], [1.0, 1.0]).value == 1.5
    with pytest.raises(DimensionError):
        O.hinge([1.0], [1.0, 2.0])


def test_mse_examples():
    assert O.mse([1.0, 2.0], [1.0, 2.0]).value == 0.0
    assert O.mse([1.0, 1.0], [0.0, 0.0]).value == 1.0
    assert O.mse([3.0], [1.0]).value == 4.0
    with pytest.raises(DimensionError):
        O.mse([1.0], [1.0, 2.0])


@settings(max_examples=200)
@given(vec, vec)
def test_losses_bounded_below(p, t):
    assert O.hinge(p, t).value >= 0.0
    assert O.mse(p, t).value >= 0.0
    if np.linalg.norm(p) > 1e-6 and np.linalg.norm(t) > 1e-6:
        assert -1.0 <= O.cosine_proximity(p, t).value <= 1.0
    probs = ad.softmax(p).value
    onehot = np.eye(5)[int(np.argmax(t))]
    assert O.categorical_cross_entropy(probs, onehot).value >= 0.0


@pytest.mark.parametrize("case", ["cross_entropy", "cosine_proximity", "hinge", "mse"])
@pytest.mark.parametrize("seed", range(3))
def test_loss_gradients(case, seed):
    fn, params = CASES[case](np.random.default_rng([seed, 5]))
    assert finite_diff_check(fn, params).passed


def test_loss_resolution():
    assert O.resolve_loss("xent") == "categorical_cross_entropy"
    assert O.get_loss("cosine") is O.cosine_proximity
    with pytest.raises(ConfigError):
        O.resolve_loss("huber")


def _p(x):
    return {"w": np.array([float(x)])}


def test_sgd_vanilla_step():
    params = _p(1.0)
    O.sgd_momentum_step(O.OptimizerState(lr=0.001, momentum=0.0), params, _p(1.0))
    assert params["w"][0] == pytest.approx(0.999, abs=1e-15)


def test_sgd_momentum_two_steps():
    state = O.OptimizerState(lr=0.1, momentum=0.9)
    params = _p(0.0)
    O.sgd_momentum_step(state, params, _p(1.0))
    assert params["w"][0] == pytest.approx(-0.1, abs=1e-15)
    O.sgd_momentum_step(state, params, _p(1.0))
    assert state.slots["w"][0] == pytest.approx(-0.19, abs=1e-15)
    assert params["w"][0] == pytest.approx(-0.29, abs=1e-15)


def test_sgd_momentum_decays_without_gradient():
    state = O.OptimizerState(lr=0.1, momentum=0.9)
    params = _p(0.0)
    O.sgd_momentum_step(state, params, _p(1.0))
    velocities = []
    for _ in range(200):
        O.sgd_momentum_step(state, params, _p(0.0))
        velocities.append(state.slots["w"][0])
    ratios = np.array(velocities[1:]) / np.array(velocities[:-1])
    np.testing.assert_allclose(ratios, 0.9, rtol=1e-12)
    # geometric series: p → −0.1 / (1 − 0.9) = −1
    assert params["w"][0] == pytest.approx(-1.0, abs=1e-8)


@given(arrays(np.float64, 4, elements=st.floats(-10, 10)), arrays(np.float64, 4, elements=st.floats(-10, 10)))
def test_sgd_without_momentum_is_gradient_descent(p, g):
    params = {"w": p.copy()}
    O.sgd_momentum_step(O.OptimizerState(lr=0.05, momentum=0.0), params, {"w": g})
    np.testing.assert_array_equal(params["w"], p + (0.0 * 0.0 - 0.05 * g))


def test_rmsprop_first_step():
    state = O.OptimizerState(kind="rmsprop", lr=0.001, rho=0.9)
    params = _p(0.0)
    O.rmsprop_step(state, params, _p(1.0))
    assert state.slots["w"][0] == pytest.approx(0.1, abs=1e-16)
    expected = -0.001 / (math.sqrt(0.1) + 1e-8)
    assert params["w"][0] == pytest.approx(expected, rel=1e-14)
    assert params["w"][0] == pytest.approx(-0.0031623, abs=1e-7)


def test_rmsprop_zero_gradient():
    params = _p(2.5)
    O.rmsprop_step(O.OptimizerState(kind="rmsprop"), params, _p(0.0))
    assert params["w"][0] == 2.5


def test_rmsprop_first_step_is_scale_free():
    moves = []
    for g in (1.0, 10.0):
        params = _p(0.0)
        O.rmsprop_step(O.OptimizerState(kind="rmsprop"), params, _p(g))
        moves.append(params["w"][0])
    assert abs(moves[1] - moves[0]) / abs(moves[0]) < 0.01


@settings(max_examples=200)
@given(arrays(np.float64, 6, elements=st.floats(-1e6, 1e6)).filter(lambda g: np.all(np.abs(g) > 1e-3)))
def test_rmsprop_first_step_bound(g):
    lr, rho = 0.001, 0.9
    params = {"w": np.zeros(6)}
    O.rmsprop_step(O.OptimizerState(kind="rmsprop", lr=lr, rho=rho), params, {"w": g})
    bound = lr * (1.0 - rho) ** -0.5 * (1 + 1e-9)
    assert np.all(np.abs(params["w"]) < bound)
    assert np.all(np.sign(params["w"]) == -np.sign(g))


def test_optimizer_shape_mismatch():
    with pytest.raises(DimensionError):
        O.sgd_momentum_step(O.OptimizerState(), {"w": np.zeros(3)}, {"w": np.zeros(2)})
    with pytest.raises(DimensionError):
        O.rmsprop_step(O.OptimizerState(kind="rmsprop"), {"w": np.zeros(3)}, {"w": np.zeros((3, 1))})


def test_optimizer_accumulators_start_at_zero_and_mirror_shapes():
    state = O.make_optimizer("rmsprop", 0.01)
    params = {"a": np.ones((2, 3)), "b": np.ones(4)}
    O.optimizer_step(state, params, {"a": np.zeros((2, 3)), "b": np.zeros(4)})
    assert {k: v.shape for k, v in state.slots.items()} == {"a": (2, 3), "b": (4,)}
    assert not any(v.any() for v in state.slots.values())
    with pytest.raises(ConfigError):
        O.make_optimizer("adam", 0.01)
