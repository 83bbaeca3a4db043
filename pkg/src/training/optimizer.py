"""
Adam optimizer over named model tensors.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np
from loguru import logger

from ..errors import NumericError
from ..tensor_core.tensor import Tensor


@dataclass
class AdamState:
    """First/second moment estimates per parameter and the step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def copy(self) -> "AdamState":
        return AdamState(
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
            t=self.t,
        )


def adam_step(
    params: Mapping[str, Tensor],
    state: AdamState,
    learning_rate: float = 2e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    """
    Apply one bias-corrected Adam update in place.

    Only tensors with requires_grad are updated; a trainable tensor without
    a gradient is treated as having a zero gradient. All gradients are
    checked before any tensor changes, so a rejected step leaves both the
    parameters and the state untouched.

    Args:
        params: Named tensors with populated `.grad`
        state: Optimizer state, updated in place
        learning_rate: Step size η
        beta1: First-moment decay
        beta2: Second-moment decay
        epsilon: Denominator stabilizer

    Returns:
        The updated state

    Raises:
        NumericError: If any gradient is not finite
    """
    trainable = {name: t for name, t in params.items() if t.requires_grad}
    grads = {}
    for name, tensor in trainable.items():
        grad = tensor.grad if tensor.grad is not None else np.zeros(tensor.shape)
        if not np.isfinite(grad).all():
            raise NumericError(f"non-finite gradient for {name}; Adam step aborted")
        grads[name] = grad

    state.t += 1
    bias1 = 1.0 - beta1 ** state.t
    bias2 = 1.0 - beta2 ** state.t
    for name, tensor in trainable.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros(tensor.shape)
            state.v[name] = np.zeros(tensor.shape)
        state.m[name] *= beta1
        state.m[name] += (1.0 - beta1) * g
        state.v[name] *= beta2
        state.v[name] += (1.0 - beta2) * (g * g)

        m_hat = state.m[name] / bias1
        v_hat = state.v[name] / bias2
        tensor.data -= learning_rate * m_hat / (np.sqrt(v_hat) + epsilon)

    logger.trace(f"Adam step {state.t} updated {len(trainable)} tensors")
    return state
