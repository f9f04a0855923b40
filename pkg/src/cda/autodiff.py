"""Minimal define-by-run reverse-mode autodiff over float64 numpy arrays.

Every op result gets a monotonically increasing ``node_id``; ``backward``
walks the reachable nodes in descending id order, which is the reverse of
insertion order and therefore a valid reverse topological order.
"""

from __future__ import annotations

import itertools
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "NonFiniteError",
    "Tensor",
    "ShapeError",
    "constant",
    "parameter",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "relu",
    "exp",
    "log",
    "sqrt",
    "softplus",
    "log_sigmoid",
    "sigmoid",
    "sum",
    "mean",
    "max",
    "transpose",
    "concat",
    "apply_mask",
    "logsumexp",
    "gradient_reversal",
    "backward",
    "grad_check",
]

_ids = itertools.count()


class NonFiniteError(ValueError, FloatingPointError):
    """NaN or Inf reached tensor data; usually a sign of divergence."""


class ShapeError(ValueError):
    """Operand shapes do not conform for an op."""

    def __init__(self, op: str, *shapes: tuple):
        self.op = op
        self.shapes = shapes
        joined = " and ".join(str(s) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class Tensor:
    """Dense float64 array that may participate in a computation graph.

    Leaves created with ``requires_grad=True`` accumulate gradients in
    ``grad``. Constants have ``node_id == "constant"`` and never receive
    gradients.
    """

    __array_priority__ = 100

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: Sequence["Tensor"] = (),
        _backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
        _op: str = "leaf",
    ):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{_op}: non-finite values in tensor data")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if self.requires_grad else None
        self._parents = tuple(_parents)
        self._backward = _backward
        self.op = _op
        self.node_id = next(_ids) if (self.requires_grad or self._parents) else "constant"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, node_id={self.node_id})"

    # Operator sugar; all routes go through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(*xs: Tensor) -> bool:
    return any(x.requires_grad or x._parents for x in xs)


def _make(data, parents, backward, op) -> Tensor:
    parents = tuple(parents)
    if not _tracked(*parents):
        return Tensor(data, _op=op)
    return Tensor(data, _parents=parents, _backward=backward, _op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------- binary ops


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    out = a.data @ b.data

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), bw, "matmul")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("div", a, b)
    if np.any(b.data == 0):
        raise ValueError("div: zero in denominator")
    out = a.data / b.data

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return _make(out, (a, b), bw, "div")


# ----------------------------------------------------------------- unary ops


def neg(x) -> Tensor:
    x = _as_tensor(x)
    return _make(-x.data, (x,), lambda g: (-g,), "neg")


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def exp(x) -> Tensor:
    x = _as_tensor(x)
    with np.errstate(over="raise"):
        out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data <= 0):
        raise ValueError("log: operand must be strictly positive")
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def sqrt(x) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data <= 0):
        raise ValueError("sqrt: operand must be strictly positive")
    out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def softplus(x) -> Tensor:
    """log(1 + exp(x)), evaluated without overflow."""
    x = _as_tensor(x)
    out = np.logaddexp(0.0, x.data)
    # sigmoid(x) = exp(x - softplus(x))
    sig = np.exp(x.data - out)
    return _make(out, (x,), lambda g: (g * sig,), "softplus")


def log_sigmoid(x) -> Tensor:
    return neg(softplus(neg(x)))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    out = np.exp(-np.logaddexp(0.0, -x.data))
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


# ----------------------------------------------------------------- reductions


def _check_axis(op: str, x: Tensor, axis) -> None:
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise ShapeError(op, x.shape, (f"axis={axis}",))


def sum(x, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    _check_axis("sum", x, axis)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), bw, "sum")


def mean(x, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    _check_axis("mean", x, axis)
    n = x.data.size if axis is None else x.shape[axis]
    if n == 0:
        raise ShapeError("mean", x.shape, (f"axis={axis}",))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def max(x, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    """Maximum along an axis; the gradient routes to the first maximal entry."""
    x = _as_tensor(x)
    _check_axis("max", x, axis)
    if axis is None:
        flat = int(np.argmax(x.data))
        out = x.data.reshape(-1)[flat]
        if keepdims:
            out = np.reshape(out, (1,) * x.ndim)

        def bw(g):
            gx = np.zeros(x.data.size)
            gx[flat] = np.asarray(g).reshape(-1)[0]
            return (gx.reshape(x.shape),)

        return _make(out, (x,), bw, "max")

    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, g, axis=axis)
        return (gx,)

    return _make(out, (x,), bw, "max")


def logsumexp(x, axis: int = -1, keepdims: bool = False) -> Tensor:
    """log(sum(exp(x))) with the row maximum subtracted first."""
    x = _as_tensor(x)
    _check_axis("logsumexp", x, axis)
    # Shift is treated as a constant: the value of logsumexp does not depend on it.
    shift = np.max(x.data, axis=axis, keepdims=True)
    out = add(log(sum(exp(sub(x, shift)), axis=axis, keepdims=True)), shift)
    if not keepdims:
        out = _squeeze(out, axis)
    return out


def _squeeze(x: Tensor, axis: int) -> Tensor:
    shape = x.shape
    out = np.squeeze(x.data, axis=axis)
    return _make(out, (x,), lambda g: (np.reshape(g, shape),), "squeeze")


# ------------------------------------------------------------- shape & misc


def transpose(x) -> Tensor:
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ShapeError("transpose", x.shape)
    return _make(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [_as_tensor(x) for x in xs]
    if not xs:
        raise ValueError("concat: no operands")
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(x.shape for x in xs)) from None
    splits = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, xs, bw, "concat")


def apply_mask(x, mask: np.ndarray, scale: float = 1.0) -> Tensor:
    """Multiply by a fixed (e.g. dropout) mask and a scalar."""
    x = _as_tensor(x)
    m = np.asarray(mask, dtype=np.float64) * scale
    if m.shape != x.shape:
        raise ShapeError("apply_mask", x.shape, m.shape)
    return _make(x.data * m, (x,), lambda g: (g * m,), "mask")


def gradient_reversal(x, lam: float) -> Tensor:
    """Identity on the forward pass; scales upstream gradients by ``-lam``."""
    x = _as_tensor(x)
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"gradient_reversal: lambda must be finite and >= 0, got {lam}")
    out = x.data.copy()
    return _make(out, (x,), lambda g: (-lam * g,), "grl")


# ------------------------------------------------------------------ backward


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not _tracked(loss):
        return

    # Collect reachable nodes, then visit by descending insertion id.
    seen = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen or t.node_id == "constant":
            continue
        seen[id(t)] = t
        stack.extend(t._parents)
    order = sorted(seen.values(), key=lambda t: t.node_id, reverse=True)

    grads = {id(loss): np.ones_like(loss.data)}
    for t in order:
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if not t._parents:
            t.grad = t.grad + g
            continue
        for p, gp in zip(t._parents, t._backward(g)):
            if gp is None or p.node_id == "constant":
                continue
            key = id(p)
            grads[key] = grads[key] + gp if key in grads else gp


def grad_check(f: Callable[[Tensor], Tensor], x0, eps: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|)."""
    if eps <= 0:
        raise ValueError("grad_check: eps must be positive")
    x0 = np.array(x0, dtype=np.float64)
    x = parameter(x0)
    backward(f(x))
    analytic = x.grad.copy()

    numeric = np.zeros_like(x0)
    flat = x0.reshape(-1)
    for i in range(flat.size):
        hi = flat.copy()
        lo = flat.copy()
        hi[i] += eps
        lo[i] -= eps
        f_hi = f(constant(hi.reshape(x0.shape))).item()
        f_lo = f(constant(lo.reshape(x0.shape))).item()
        numeric.reshape(-1)[i] = (f_hi - f_lo) / (2 * eps)
    if analytic.size == 0:
        return 0.0
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max())
