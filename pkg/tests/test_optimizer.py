"""Tests for the Adam update."""

import numpy as np
import pytest

from src.errors import NumericError
from src.model.mvam_model import init_params
from src.tensor_core import Tensor
from src.training.optimizer import AdamState, adam_step


def _param(values, grad=None):
    tensor = Tensor(np.array(values, dtype=np.float64), requires_grad=True)
    if grad is not None:
        tensor.grad = np.array(grad, dtype=np.float64)
    return tensor


def test_first_step_moves_by_learning_rate():
    w = _param([1.0, -2.0, 0.5], grad=[0.3, -40.0, 1e-3])
    adam_step({"w": w}, AdamState(), learning_rate=0.01)
    np.testing.assert_allclose(w.data, [0.99, -1.99, 0.49], atol=1e-6)


def test_zero_gradient_keeps_params_and_decays_moments():
    w = _param([1.0, 2.0], grad=[1.0, -1.0])
    state = adam_step({"w": w}, AdamState())
    m_before, v_before = state.m["w"].copy(), state.v["w"].copy()
    after_first = w.data.copy()

    w.grad = np.zeros(2)
    adam_step({"w": w}, state)
    np.testing.assert_allclose(state.m["w"], 0.9 * m_before)
    np.testing.assert_allclose(state.v["w"], 0.999 * v_before)
    assert state.t == 2
    # decayed moments still carry momentum
    assert not np.array_equal(w.data, after_first)


def test_fresh_zero_gradient_is_a_no_op():
    w = _param([1.0, 2.0])
    state = adam_step({"w": w}, AdamState())
    np.testing.assert_array_equal(w.data, [1.0, 2.0])
    np.testing.assert_array_equal(state.m["w"], [0.0, 0.0])


def test_fixed_tensors_are_untouched(tiny_config):
    params = init_params(tiny_config, seed=0)
    pe_before = params["PE"].data.copy()
    for name, tensor in params.trainable().items():
        tensor.grad = np.ones(tensor.shape)
    state = adam_step(params, AdamState())
    np.testing.assert_array_equal(params["PE"].data, pe_before)
    assert "PE" not in state.m


def test_non_finite_gradient_rejects_whole_step():
    good = _param([1.0], grad=[0.5])
    bad = _param([2.0], grad=[np.inf])
    state = AdamState()
    with pytest.raises(NumericError, match="bad"):
        adam_step({"good": good, "bad": bad}, state)
    np.testing.assert_array_equal(good.data, [1.0])
    assert state.t == 0 and state.m == {}


def test_deterministic():
    def run():
        w = _param([0.4, -0.1])
        state = AdamState()
        for step in range(5):
            w.grad = np.array([np.sin(step), np.cos(step)])
            adam_step({"w": w}, state, learning_rate=0.05)
        return w.data

    np.testing.assert_array_equal(run(), run())


def test_state_copy_is_independent():
    w = _param([1.0], grad=[1.0])
    state = adam_step({"w": w}, AdamState())
    clone = state.copy()
    adam_step({"w": w}, state)
    assert clone.t == 1
    assert not np.array_equal(clone.m["w"], state.m["w"])
