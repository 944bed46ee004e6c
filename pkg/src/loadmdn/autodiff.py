"""Tape-based reverse-mode automatic differentiation over float64 arrays.

Every operation returns a new immutable :class:`Tensor` that remembers its
parents together with a vector-Jacobian product for each of them.  The graph
is built on the fly during the forward pass and released by :func:`backward`,
so a fresh tape is recorded for every minibatch.
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

__all__ = [
    "Tensor",
    "GradientMap",
    "DimensionError",
    "ContractError",
    "EvaluationError",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "square",
    "exp",
    "log",
    "relu",
    "softplus",
    "elu_plus_one",
    "matmul",
    "affine",
    "tsum",
    "mean",
    "logsumexp",
    "log_softmax",
    "backward",
    "grad_check",
]


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class EvaluationError(ArithmeticError):
    """A function produced a non-finite value where a finite one was required."""


class Tensor:
    """A node of the computation graph.

    ``data`` is a read-only float64 array.  Leaves created with
    ``requires_grad=True`` receive adjoints from :func:`backward`.
    """

    __slots__ = ("data", "requires_grad", "_parents", "__weakref__")
    __array_ufunc__ = None  # ndarray <op> Tensor defers to the Tensor's reflected operator

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()

    @classmethod
    def _node(cls, data: np.ndarray, parents: Iterable[tuple["Tensor", Callable]]) -> "Tensor":
        out = cls.__new__(cls)
        data = np.asarray(data, dtype=np.float64)
        data.flags.writeable = False
        out.data = data
        live = tuple((p, fn) for p, fn in parents if p.requires_grad)
        out.requires_grad = bool(live)
        out._parents = live
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return _getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# --- elementwise binary ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return Tensor._node(
        a.data + b.data,
        ((a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(g, b.shape))),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return Tensor._node(
        a.data - b.data,
        ((a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(-g, b.shape))),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return Tensor._node(
        a.data * b.data,
        (
            (a, lambda g: _unbroadcast(g * b.data, a.shape)),
            (b, lambda g: _unbroadcast(g * a.data, b.shape)),
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data
    return Tensor._node(
        out,
        (
            (a, lambda g: _unbroadcast(g / b.data, a.shape)),
            (b, lambda g: _unbroadcast(-g * out / b.data, b.shape)),
        ),
    )


# --- elementwise unary ----------------------------------------------------

def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._node(-a.data, ((a, lambda g: -g),))


def square(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._node(a.data * a.data, ((a, lambda g: 2.0 * a.data * g),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._node(out, ((a, lambda g: g * out),))


def log(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._node(np.log(a.data), ((a, lambda g: g / a.data),))


def relu(a) -> Tensor:
    """Elementwise ``max(z, 0)``; the subgradient at exactly 0 is 0."""
    a = as_tensor(a)
    mask = a.data > 0.0
    return Tensor._node(np.where(mask, a.data, 0.0), ((a, lambda g: g * mask),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    slope = 0.5 * (1.0 + np.tanh(0.5 * a.data))  # logistic sigmoid without overflow
    return Tensor._node(np.logaddexp(0.0, a.data), ((a, lambda g: g * slope),))


def elu_plus_one(a, psi: float, floor: float) -> Tensor:
    """``1 + ELU_psi(z) + floor`` with ELU_psi(z) = z for z >= 0, psi*(e^z - 1) otherwise."""
    a = as_tensor(a)
    z = a.data
    ez = np.exp(np.minimum(z, 0.0))
    pos = z >= 0.0
    out = np.where(pos, 1.0 + z, 1.0 + psi * (ez - 1.0)) + floor
    slope = np.where(pos, 1.0, psi * ez)
    return Tensor._node(out, ((a, lambda g: g * slope),))


# --- linear algebra -------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or a.ndim > 2 or b.ndim > 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    out = a.data @ b.data

    def grad_a(g):
        if b.ndim == 1:
            return np.multiply.outer(g, b.data) if a.ndim == 2 else g * b.data
        return g @ b.data.T

    def grad_b(g):
        if a.ndim == 1:
            return np.multiply.outer(a.data, g) if b.ndim == 2 else g * a.data
        if b.ndim == 1:
            return a.data.T @ g
        return a.data.T @ g

    return Tensor._node(out, ((a, grad_a), (b, grad_b)))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._node(a.data.T, ((a, lambda g: g.T),))


def affine(x, W, b) -> Tensor:
    """``W x + b`` for ``x`` of shape (n,) or a batch of rows (B, n); ``W`` is (m, n)."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if W.ndim != 2 or b.ndim != 1 or x.ndim not in (1, 2):
        raise DimensionError(f"affine: expected x (n,) or (B, n), W (m, n), b (m,); got x {x.shape}, W {W.shape}, b {b.shape}")
    if x.shape[-1] != W.shape[1]:
        raise DimensionError(f"affine: x shape {x.shape} does not match W shape {W.shape}")
    if b.shape[0] != W.shape[0]:
        raise DimensionError(f"affine: b shape {b.shape} does not match W shape {W.shape}")
    xd, Wd = x.data, W.data
    out = xd @ Wd.T + b.data

    def grad_x(g):
        return g @ Wd

    def grad_W(g):
        return np.multiply.outer(g, xd) if xd.ndim == 1 else g.T @ xd

    def grad_b(g):
        return g if g.ndim == 1 else g.sum(axis=0)

    return Tensor._node(out, ((x, grad_x), (W, grad_W), (b, grad_b)))


# --- shape ----------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return Tensor._node(a.data.reshape(shape), ((a, lambda g: g.reshape(a.shape)),))


def _getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]

    def grad(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return full

    return Tensor._node(out, ((a, grad),))


# --- reductions -----------------------------------------------------------

def _expand(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    return Tensor._node(
        a.data.sum(axis=axis, keepdims=keepdims),
        ((a, lambda g: _expand(g, a.shape, axis, keepdims)),),
    )


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return Tensor._node(
        a.data.mean(axis=axis, keepdims=keepdims),
        ((a, lambda g: _expand(g, a.shape, axis, keepdims) / count),),
    )


def logsumexp(a, axis=-1, keepdims=False) -> Tensor:
    """``log(sum(exp(a)))`` along ``axis`` with the max shift applied first."""
    a = as_tensor(a)
    shift = a.data.max(axis=axis, keepdims=True)
    shifted = np.exp(a.data - shift)
    total = shifted.sum(axis=axis, keepdims=True)
    out = shift + np.log(total)
    weights = shifted / total
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def grad(g):
        g = g if keepdims else np.expand_dims(g, axis)
        return g * weights

    return Tensor._node(out, ((a, grad),))


def log_softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    return sub(a, logsumexp(a, axis=axis, keepdims=True))


# --- reverse sweep --------------------------------------------------------

class GradientMap:
    """Adjoints of the leaves reached by a backward sweep, keyed by leaf identity.

    Looking up a leaf that was not reached yields zeros of the leaf's shape.
    """

    def __init__(self):
        self._grads: dict[int, tuple[Tensor, np.ndarray]] = {}

    def _set(self, leaf: Tensor, grad: np.ndarray) -> None:
        self._grads[id(leaf)] = (leaf, grad)

    def __getitem__(self, leaf: Tensor) -> np.ndarray:
        entry = self._grads.get(id(leaf))
        if entry is None or entry[0] is not leaf:
            return np.zeros_like(leaf.data)
        return entry[1]

    def __contains__(self, leaf: Tensor) -> bool:
        entry = self._grads.get(id(leaf))
        return entry is not None and entry[0] is leaf

    def __len__(self) -> int:
        return len(self._grads)

    def leaves(self) -> list[Tensor]:
        return [t for t, _ in self._grads.values()]


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> GradientMap:
    """Propagate adjoints from a scalar ``loss`` to every leaf that requires grad.

    The recorded graph is released afterwards; calling ``backward`` twice on the
    same loss yields an empty map the second time.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        shape = getattr(loss, "shape", None)
        raise ContractError(f"backward requires a scalar loss, got shape {shape}")
    result = GradientMap()
    if not loss.requires_grad:
        return result
    order = _topological(loss)
    adjoints: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = adjoints.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            result._set(node, np.array(g, dtype=np.float64).reshape(node.shape))
            continue
        for parent, vjp in node._parents:
            contrib = vjp(g)
            prev = adjoints.get(id(parent))
            adjoints[id(parent)] = contrib if prev is None else prev + contrib
    for node in order:
        if node._parents:  # interior nodes become inert constants
            node._parents = ()
            node.requires_grad = False
    return result


def grad_check(f: Callable[[Tensor], Tensor], theta, h: float = 1e-5) -> float:
    """Maximum componentwise relative error between reverse-mode and central differences.

    The denominator of each relative error is ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if h <= 0:
        raise ContractError(f"step must be positive, got {h}")
    theta = np.array(theta, dtype=np.float64)
    leaf = Tensor(theta, requires_grad=True)
    out = f(leaf)
    if not np.all(np.isfinite(out.data)):
        raise EvaluationError("f is not finite at theta")
    analytic = backward(out)[leaf].reshape(-1)

    flat = theta.reshape(-1)
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        probe = flat.copy()
        probe[i] += h
        up = f(Tensor(probe.reshape(theta.shape))).data
        probe[i] -= 2.0 * h
        down = f(Tensor(probe.reshape(theta.shape))).data
        if not (np.all(np.isfinite(up)) and np.all(np.isfinite(down))):
            raise EvaluationError(f"f is not finite at probe points of component {i}")
        numeric[i] = (float(up) - float(down)) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0
