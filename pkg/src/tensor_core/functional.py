"""
Functional operations

Composite differentiable operations used by the model: matrix product,
same-length 1-D convolution, masked row softmax, layer/batch normalization,
pointwise nonlinearities, dropout and embedding lookup.
"""

from typing import Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DataError, NumericError, ShapeError
from .tensor import Function, Tensor

ACTIVATIONS = ("identity", "tanh", "relu", "sigmoid")
POINTWISE_KINDS = ("relu", "tanh", "sigmoid", "add", "multiply", "dropout")

_SIGMOID_EPS = np.finfo(np.float64).eps

RandomSource = Union[int, np.random.Generator, None]


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m×k and a k×n tensor."""
    return a @ b


class Conv1dSame(Function):
    """
    Convolution over the columns of a d_e×N input producing d_c×N output.

    The input is zero padded with ⌊(k−1)/2⌋ columns on the left and
    ⌈(k−1)/2⌉ on the right, so output column i sees input columns i−left … i+right.
    """

    def forward(self, x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] < 1:
            raise ShapeError(f"conv1d_same expects a non-empty d_e×N input, got shape {x.shape}")
        if kernel.ndim != 3 or kernel.shape[1] != x.shape[0]:
            raise ShapeError(f"kernel shape {kernel.shape} does not match input shape {x.shape}")
        if bias.shape != (kernel.shape[2],):
            raise ShapeError(f"bias shape {bias.shape} does not match {kernel.shape[2]} feature maps")

        width, d_e, d_c = kernel.shape
        n = x.shape[1]
        self.left = (width - 1) // 2
        right = width - 1 - self.left
        padded = np.pad(x, ((0, 0), (self.left, right)))
        windows = sliding_window_view(padded, width, axis=1)
        # cols[n, j*d_e + e] = padded[e, n + j]
        self.cols = windows.transpose(1, 2, 0).reshape(n, width * d_e)
        self.flat_kernel = kernel.reshape(width * d_e, d_c)
        return (self.cols @ self.flat_kernel + bias).T

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        x, kernel, _ = self.tensors
        width, d_e, d_c = kernel.shape
        n = x.shape[1]
        grad_rows = grad.T

        grad_kernel = (self.cols.T @ grad_rows).reshape(width, d_e, d_c)
        grad_bias = grad.sum(axis=1)

        grad_cols = (grad_rows @ self.flat_kernel.T).reshape(n, width, d_e)
        grad_padded = np.zeros((d_e, n + width - 1))
        for j in range(width):
            grad_padded[:, j:j + n] += grad_cols[:, j, :].T
        grad_x = grad_padded[:, self.left:self.left + n]
        return grad_x, grad_kernel, grad_bias


def conv1d_same(x: Tensor, kernel: Tensor, bias: Tensor, activation: str = "tanh") -> Tensor:
    """
    Length-preserving convolution followed by an element-wise activation.

    Args:
        x: Input of shape d_e×N
        kernel: Filters of shape k×d_e×d_c
        bias: Bias of shape d_c
        activation: One of ACTIVATIONS

    Returns:
        Tensor of shape d_c×N
    """
    return activate(Conv1dSame.apply(x, kernel, bias), activation)


class SoftmaxRows(Function):
    def forward(self, x: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
        if x.ndim != 2:
            raise ShapeError(f"softmax_rows expects a matrix, got shape {x.shape}")
        if mask is None:
            mask = np.ones(x.shape, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"mask shape {mask.shape} does not match scores shape {x.shape}")
        if not mask.any(axis=1).all():
            raise NumericError("softmax_rows received a fully masked row")

        shifted = np.where(mask, x, -np.inf)
        shifted = shifted - shifted.max(axis=1, keepdims=True)
        weights = np.where(mask, np.exp(shifted), 0.0)
        self.out = weights / weights.sum(axis=1, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        y = self.out
        return (y * (grad - (grad * y).sum(axis=1, keepdims=True)),)


def softmax_rows(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Row-wise softmax; masked (False) entries get exactly zero weight.

    Raises:
        NumericError: If a row has no unmasked entry
    """
    return SoftmaxRows.apply(x, mask=mask)


class Normalize(Function):
    """Standardize along `axis` (1: per row, 0: per column), then scale and shift per feature."""

    def forward(
        self,
        x: np.ndarray,
        gain: np.ndarray,
        bias: np.ndarray,
        eps: float = 1e-5,
        axis: int = 1,
    ) -> np.ndarray:
        if x.ndim != 2:
            raise ShapeError(f"normalize expects a matrix, got shape {x.shape}")
        if gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
            raise ShapeError(f"gain {gain.shape} / bias {bias.shape} must match {x.shape[1]} features")
        if axis == 1 and x.shape[1] < 2:
            raise ShapeError("layer normalization needs at least two features per row")

        self.axis = axis
        mean = x.mean(axis=axis, keepdims=True)
        var = x.var(axis=axis, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = (x - mean) * self.inv_std
        return self.x_hat * gain + bias

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        _, gain, _ = self.tensors
        axis = self.axis
        count = grad.shape[axis]
        d_xhat = grad * gain.data
        grad_x = (self.inv_std / count) * (
            count * d_xhat
            - d_xhat.sum(axis=axis, keepdims=True)
            - self.x_hat * (d_xhat * self.x_hat).sum(axis=axis, keepdims=True)
        )
        return grad_x, (grad * self.x_hat).sum(axis=0), grad.sum(axis=0)


def layer_normalize(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each row to mean 0 / variance 1 (eps inside the root), then gain and bias."""
    return Normalize.apply(x, gain, bias, eps=eps, axis=1)


def batch_normalize(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each column using statistics over the rows."""
    return Normalize.apply(x, gain, bias, eps=eps, axis=0)


def normalize(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5, kind: str = "layer") -> Tensor:
    if kind == "layer":
        return layer_normalize(x, gain, bias, eps)
    if kind == "batch":
        return batch_normalize(x, gain, bias, eps)
    raise ValueError(f"Unknown normalization kind: {kind}")


class Relu(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.active = x > 0
        return np.where(self.active, x, 0.0)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (np.where(self.active, grad, 0.0),)


class Tanh(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * (1.0 - self.out ** 2),)


class Sigmoid(Function):
    """Logistic function, kept strictly inside (0, 1) by clamping at machine epsilon."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = np.exp(-np.abs(x))
        out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
        self.out = np.clip(out, _SIGMOID_EPS, 1.0 - _SIGMOID_EPS)
        self.inside = (out >= _SIGMOID_EPS) & (out <= 1.0 - _SIGMOID_EPS)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        # flat where clamped
        return (np.where(self.inside, grad * self.out * (1.0 - self.out), 0.0),)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def tanh(x: Tensor) -> Tensor:
    return Tanh.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def activate(x: Tensor, kind: str) -> Tensor:
    if kind == "identity":
        return x
    if kind == "tanh":
        return tanh(x)
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"Unknown activation: {kind}. Expected one of {ACTIVATIONS}")


class Dropout(Function):
    def forward(self, x: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
        keep = rng.random(x.shape) >= p
        self.scale = keep / (1.0 - p)
        return x * self.scale

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * self.scale,)


def dropout(x: Tensor, p: float, rng: RandomSource = None, training: bool = True) -> Tensor:
    """
    Inverted dropout: zero each entry with probability p and scale survivors by 1/(1−p).

    Args:
        x: Input tensor
        p: Drop probability in [0, 1)
        rng: Seed or generator for the drop mask
        training: At eval time dropout is the identity

    Returns:
        Tensor of the same shape as x
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return Dropout.apply(x, p=p, rng=rng)


class Embedding(Function):
    """Row gather from an embedding table; rows for `padding_idx` are zero and get no gradient."""

    def forward(self, table: np.ndarray, ids: np.ndarray, padding_idx: Optional[int] = 0) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise DataError(
                f"token id out of range [0, {table.shape[0]}); map unknown tokens to UNK before encoding"
            )
        self.ids = ids
        self.keep = ids != padding_idx if padding_idx is not None else np.ones(ids.shape, dtype=bool)
        out = table[ids]
        out[~self.keep] = 0.0
        return out

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        table = self.tensors[0]
        grad_table = np.zeros(table.shape)
        np.add.at(grad_table, self.ids[self.keep], grad[self.keep])
        return (grad_table,)


def embedding_lookup(table: Tensor, ids: np.ndarray, padding_idx: Optional[int] = 0) -> Tensor:
    """Gather rows of `table` for `ids`, giving an len(ids)×d tensor."""
    return Embedding.apply(table, ids=ids, padding_idx=padding_idx)


def _check_broadcast(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"pointwise operands must match or be scalar: {a.shape} vs {b.shape}")


def pointwise(
    kind: str,
    *operands: Tensor,
    p: float = 0.0,
    rng: RandomSource = None,
    training: bool = True,
) -> Tensor:
    """
    Dispatch a pointwise operation by name.

    Args:
        kind: One of POINTWISE_KINDS
        *operands: One tensor for unary kinds, two for add/multiply
        p: Dropout probability
        rng: Dropout seed or generator
        training: Dropout is the identity when False

    Returns:
        Result tensor
    """
    if kind in ("add", "multiply"):
        if len(operands) != 2:
            raise ValueError(f"{kind} takes two operands, got {len(operands)}")
        a, b = operands
        _check_broadcast(a, b)
        return a + b if kind == "add" else a * b
    if len(operands) != 1:
        raise ValueError(f"{kind} takes one operand, got {len(operands)}")
    x = operands[0]
    if kind == "dropout":
        return dropout(x, p, rng, training)
    if kind in ("relu", "tanh", "sigmoid"):
        return activate(x, kind)
    raise ValueError(f"Unknown pointwise kind: {kind}. Expected one of {POINTWISE_KINDS}")
