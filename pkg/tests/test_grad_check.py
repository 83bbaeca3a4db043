"""Tests for the finite-difference gradient checker."""

import numpy as np
import pytest

from src.errors import NumericError
from src.main import ExperimentRunner
from src.config.config_manager import ConfigManager
from src.model.mvam_model import forward
from src.tensor_core import Tensor, grad_check, relative_error
from src.training.trainer import bce_loss


class TestGradCheck:
    def test_quadratic_is_nearly_exact(self):
        x = Tensor([0.5, -1.2, 2.0], requires_grad=True)
        report = grad_check(lambda p: (p["x"] * p["x"]).sum(), {"x": x})
        assert report.max_relative_error["x"] < 1e-8
        assert report.all_passed

    def test_zero_function_passes_via_floor(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        report = grad_check(lambda p: (p["x"] * 0.0).sum(), {"x": x})
        assert report.max_relative_error["x"] == 0.0
        assert report.all_passed

    def test_wrong_gradient_is_reported(self):
        from src.tensor_core.tensor import Function

        class BrokenSquare(Function):
            def forward(self, a):
                return a * a

            def backward(self, grad):
                return (grad * self.tensors[0].data,)  # missing factor 2

        x = Tensor([1.0, 2.0], requires_grad=True)
        report = grad_check(lambda p: BrokenSquare.apply(p["x"]).sum(), {"x": x})
        assert not report.all_passed
        assert report.summary_lines()[-1] == "FAIL"

    def test_non_finite_loss_rejected(self):
        x = Tensor([1.0], requires_grad=True)
        with pytest.raises(NumericError):
            grad_check(lambda p: (p["x"] * float("nan")).sum(), {"x": x})

    @pytest.mark.parametrize("step", [1e-8, 1e-2])
    def test_step_out_of_range(self, step):
        with pytest.raises(ValueError):
            grad_check(lambda p: p["x"].sum(), {"x": Tensor([1.0], requires_grad=True)}, step=step)

    def test_parameters_are_restored(self):
        x = Tensor([0.3, 0.7], requires_grad=True)
        before = x.data.copy()
        grad_check(lambda p: (p["x"] * p["x"]).sum(), {"x": x})
        np.testing.assert_array_equal(x.data, before)

    def test_relative_error_floor(self):
        np.testing.assert_allclose(relative_error(np.array([0.0]), np.array([1e-12])), [1e-4])


class TestModelGradients:
    def test_full_model_matches_finite_differences(self, tiny_config, random_params):
        rng = np.random.default_rng(5)
        documents = [rng.integers(2, tiny_config.vocab_size, size=n) for n in (12, 7)]
        truth = rng.integers(0, 2, size=(2, tiny_config.num_labels)).astype(float)

        def loss(p):
            return bce_loss(forward(documents, p, tiny_config).probabilities, truth)

        report = grad_check(loss, random_params)
        assert report.all_passed, "\n".join(report.summary_lines())
        assert "block0.W_Q" in report.max_relative_error
        assert "PE" not in report.max_relative_error

    def test_runner_gradcheck(self):
        report = ExperimentRunner(ConfigManager()).gradcheck(seed=0)
        assert report.all_passed
        assert report.worst < 1e-4
