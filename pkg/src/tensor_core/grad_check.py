"""
Gradient Check

Compares reverse-mode gradients against central finite differences, one
coordinate at a time.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Union

import numpy as np
from loguru import logger

from ..errors import NumericError
from .tensor import Tensor

RELATIVE_ERROR_FLOOR = 1e-8

LossFn = Callable[[Mapping[str, Tensor]], Union[Tensor, float]]


@dataclass
class GradCheckReport:
    """Per-parameter outcome of a finite-difference gradient check."""

    step: float
    tolerance: float
    max_relative_error: Dict[str, float] = field(default_factory=dict)
    passed: Dict[str, bool] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    @property
    def worst(self) -> float:
        return max(self.max_relative_error.values(), default=0.0)

    def summary_lines(self) -> List[str]:
        lines = [f"step={self.step:g} tolerance={self.tolerance:g}"]
        for name, err in self.max_relative_error.items():
            status = "ok" if self.passed[name] else "FAIL"
            lines.append(f"{name:<24} max_rel_err={err:.3e} {status}")
        lines.append("PASS" if self.all_passed else "FAIL")
        return lines


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = RELATIVE_ERROR_FLOOR) -> np.ndarray:
    """|a − n| / max(|a|, |n|, floor), elementwise."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def _scalar(value: Union[Tensor, float]) -> float:
    result = value.item() if isinstance(value, Tensor) else float(value)
    if not np.isfinite(result):
        raise NumericError(f"loss is not finite: {result}")
    return result


def grad_check(
    f: LossFn,
    params: Mapping[str, Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    floor: float = RELATIVE_ERROR_FLOOR,
) -> GradCheckReport:
    """
    Check analytic gradients of `f` against central differences.

    Args:
        f: Maps the parameter mapping to a scalar loss; must be deterministic
        params: Named tensors; only those with requires_grad are checked
        step: Finite-difference step, in [1e-7, 1e-3]
        tolerance: Maximum accepted relative error per parameter
        floor: Lower bound on the relative-error denominator

    Returns:
        GradCheckReport with the worst relative error per parameter

    Raises:
        ValueError: If step is outside [1e-7, 1e-3]
        NumericError: If the loss is not finite
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"finite-difference step must be in [1e-7, 1e-3], got {step}")

    checked = {name: t for name, t in params.items() if t.requires_grad}
    for tensor in checked.values():
        tensor.zero_grad()

    loss = f(params)
    _scalar(loss)
    if isinstance(loss, Tensor) and loss.requires_grad:
        loss.backward()

    report = GradCheckReport(step=step, tolerance=tolerance)
    for name, tensor in checked.items():
        analytic = tensor.grad.copy() if tensor.grad is not None else np.zeros(tensor.shape)
        numeric = np.zeros(tensor.shape)
        for idx in np.ndindex(*tensor.shape):
            original = tensor.data[idx]
            tensor.data[idx] = original + step
            plus = _scalar(f(params))
            tensor.data[idx] = original - step
            minus = _scalar(f(params))
            tensor.data[idx] = original
            numeric[idx] = (plus - minus) / (2.0 * step)

        worst = float(relative_error(analytic, numeric, floor).max()) if tensor.size else 0.0
        report.max_relative_error[name] = worst
        report.passed[name] = worst < tolerance
        logger.debug(f"grad check {name}: max relative error {worst:.3e}")

    if report.all_passed:
        logger.info(f"Gradient check passed for {len(checked)} tensors (worst {report.worst:.3e})")
    else:
        failed = [name for name, ok in report.passed.items() if not ok]
        logger.warning(f"Gradient check failed for: {', '.join(failed)}")
    return report
