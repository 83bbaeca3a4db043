"""
Dense tensor arithmetic with reverse-mode automatic differentiation.
"""

from .tensor import Function, Tensor
from .functional import (
    ACTIVATIONS,
    activate,
    batch_normalize,
    conv1d_same,
    dropout,
    embedding_lookup,
    layer_normalize,
    matmul,
    normalize,
    pointwise,
    relu,
    sigmoid,
    softmax_rows,
    tanh,
)
from .grad_check import GradCheckReport, grad_check, relative_error

__all__ = [
    "ACTIVATIONS",
    "Function",
    "GradCheckReport",
    "Tensor",
    "activate",
    "batch_normalize",
    "conv1d_same",
    "dropout",
    "embedding_lookup",
    "grad_check",
    "layer_normalize",
    "matmul",
    "normalize",
    "pointwise",
    "relative_error",
    "relu",
    "sigmoid",
    "softmax_rows",
    "tanh",
]
