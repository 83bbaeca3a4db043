"""
Tensor

This module holds the dense 64-bit tensor used by every part of the model and
the reverse-mode differentiation machinery behind it. Differentiable
operations subclass `Function`; the composite operations the model needs
(convolution, masked softmax, normalization, ...) live in `functional.py`.
"""

from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from ..errors import NumericError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]
Axis = Optional[Union[int, Tuple[int, ...]]]


class Function:
    """
    Base class for differentiable operations.

    `forward` receives the raw arrays of the input tensors and returns the
    output array. `backward` receives dL/d(output) and returns one gradient
    array (or None) per input tensor, in input order.
    """

    def __init__(self, *tensors: "Tensor"):
        self.tensors = tensors

    def forward(self, *args: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        """
        Run the forward pass and wrap the result in a tensor linked to this function.

        Args:
            *tensors: Input tensors
            **kwargs: Non-differentiable arguments forwarded to `forward`

        Returns:
            Output tensor; it records its creator only when an input requires grad
        """
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = any(t.requires_grad for t in tensors)
        return Tensor(out_data, requires_grad=requires_grad, creator=func if requires_grad else None)

    @staticmethod
    def unbroadcast(grad: np.ndarray, to_shape: Tuple[int, ...]) -> np.ndarray:
        """Sum out the dimensions numpy broadcasting added or stretched."""
        if grad.shape == to_shape:
            return grad
        while grad.ndim > len(to_shape):
            grad = grad.sum(axis=0)
        for dim, extent in enumerate(to_shape):
            if extent == 1 and grad.shape[dim] != 1:
                grad = grad.sum(axis=dim, keepdims=True)
        return grad


class Tensor:
    """
    Dense row-major array of 64-bit reals participating in a differentiation graph.
    """

    # numpy operands on the left defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
        name: Optional[str] = None,
    ):
        """
        Initialize a tensor.

        Args:
            data: Values, converted to a float64 array
            requires_grad: Whether gradients flow into this tensor
            creator: Function that produced this tensor (None for leaves)
            name: Optional label used in logs and gradient-check reports
        """
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.creator = creator
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._released = False

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Return a leaf tensor sharing no graph with this one."""
        return Tensor(self.data.copy(), requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate_grad(self, grad: np.ndarray) -> None:
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise ShapeError(f"gradient shape {grad.shape} does not match tensor shape {self.shape}")
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def backward(self) -> None:
        """
        Backpropagate from this scalar through the graph that produced it.

        Gradients are summed across fan-out and accumulate into leaf `.grad`
        arrays across calls on different losses until `zero_grad` is called.
        The graph is released afterwards, so calling backward twice on the
        same loss is rejected.

        Raises:
            ShapeError: If this tensor is not a scalar
            NumericError: If the graph was already released or nothing requires grad
        """
        if self.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._released:
            raise NumericError("graph already released; recompute the loss before calling backward() again")
        if not self.requires_grad:
            raise NumericError("loss does not depend on any tensor that requires grad")

        order = self._topological_order()
        self._accumulate_grad(np.ones_like(self.data))

        for node in reversed(order):
            if node.creator is None or node.grad is None:
                continue
            grads = node.creator.backward(node.grad)
            if not isinstance(grads, tuple):
                grads = (grads,)
            for parent, grad in zip(node.creator.tensors, grads):
                if grad is not None and parent.requires_grad:
                    parent._accumulate_grad(grad)

        for node in order:
            if node.creator is not None:
                node.creator = None
                node._released = True
        logger.trace(f"backward released {len(order)} graph nodes")

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, children_done = stack.pop()
            if id(node) in visited:
                continue
            if children_done:
                visited.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            if node.creator is not None:
                for parent in node.creator.tensors:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    # Arithmetic

    def __add__(self, other: Union["Tensor", float, int]) -> "Tensor":
        return Add.apply(self, _as_tensor(other))

    def __radd__(self, other: Union[float, int]) -> "Tensor":
        return Add.apply(_as_tensor(other), self)

    def __sub__(self, other: Union["Tensor", float, int]) -> "Tensor":
        return Add.apply(self, Neg.apply(_as_tensor(other)))

    def __rsub__(self, other: Union[float, int]) -> "Tensor":
        return Add.apply(_as_tensor(other), Neg.apply(self))

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __mul__(self, other: Union["Tensor", float, int]) -> "Tensor":
        return Mul.apply(self, _as_tensor(other))

    def __rmul__(self, other: Union[float, int]) -> "Tensor":
        return Mul.apply(_as_tensor(other), self)

    def __truediv__(self, other: Union[float, int]) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by a constant scalar")
        return Mul.apply(self, _as_tensor(1.0 / float(other)))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return Matmul.apply(self, other)

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def transpose(self) -> "Tensor":
        return Transpose.apply(self)

    def reshape(self, *shape: int) -> "Tensor":
        return Reshape.apply(self, shape=shape)

    def sum(self, axis: Axis = None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Axis = None, keepdims: bool = False) -> "Tensor":
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def log(self, floor: float = 1e-12) -> "Tensor":
        return Log.apply(self, floor=floor)

    @staticmethod
    def stack(tensors: Sequence["Tensor"]) -> "Tensor":
        if not tensors:
            raise ShapeError("cannot stack an empty list of tensors")
        return Stack.apply(*tensors)


def _as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        try:
            return a + b
        except ValueError:
            raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from None

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a, b = self.tensors
        return self.unbroadcast(grad, a.shape), self.unbroadcast(grad, b.shape)


class Neg(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        return -a

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (-grad,)


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        try:
            return a * b
        except ValueError:
            raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from None

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a, b = self.tensors
        return (
            self.unbroadcast(grad * b.data, a.shape),
            self.unbroadcast(grad * a.data, b.shape),
        )


class Matmul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        return a @ b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a, b = self.tensors
        return grad @ b.data.T, a.data.T @ grad


class Transpose(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        if a.ndim != 2:
            raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
        return a.T.copy()

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad.T,)


class Reshape(Function):
    def forward(self, a: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        return a.reshape(shape)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad.reshape(self.tensors[0].shape),)


class Sum(Function):
    def forward(self, a: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
        self.axis = axis
        self.keepdims = keepdims
        return np.sum(a, axis=axis, keepdims=keepdims)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        shape = self.tensors[0].shape
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, shape).copy(),)


class Mean(Function):
    def forward(self, a: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
        self.axis = axis
        self.keepdims = keepdims
        out = np.mean(a, axis=axis, keepdims=keepdims)
        self.count = a.size // max(out.size, 1)
        return out

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        shape = self.tensors[0].shape
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad / self.count, shape).copy(),)


class Stack(Function):
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise ShapeError(f"cannot stack tensors of differing shapes {sorted(shapes)}")
        return np.stack(arrays, axis=0)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(grad[i] for i in range(grad.shape[0]))


class Log(Function):
    """Natural log with the argument clamped from below by `floor`."""

    def forward(self, a: np.ndarray, floor: float = 1e-12) -> np.ndarray:
        self.clamped = np.maximum(a, floor)
        self.active = a > floor
        return np.log(self.clamped)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (np.where(self.active, grad / self.clamped, 0.0),)
