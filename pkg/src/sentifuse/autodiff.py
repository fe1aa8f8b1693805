"""Dense float64 tensors with define-by-run reverse-mode differentiation.

A :class:`Graph` records every operation applied to its parameters in
creation order, which is already a topological order, so :func:`backward`
is a single reverse sweep. Arrays that never touch a graph act as
constants and cost nothing in the backward pass.

    g = Graph()
    w = g.param("w", np.array([1.0, 2.0]))
    loss = sum_(w * w)
    grads = backward(g, loss)      # {"w": array([2., 4.])}
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractError, DegenerateVectorError, DimensionError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]

# Test hook: op ids listed here get their backward rule scaled by 1.5.
_CORRUPTED: set = set()


class Tensor:
    """A value in a computation, optionally recorded on a graph."""

    __slots__ = ("value", "op", "parents", "backward_fn", "graph", "name")
    __array_priority__ = 100

    def __init__(self, value, op="const", parents=(), backward_fn=None, graph=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.op = op
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.graph = graph
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.shape})"

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
        return index_select(self, index)


class Graph:
    """Tape of nodes in creation order plus the named trainable parameters."""

    def __init__(self):
        self.nodes = []
        self.parameters: Dict[str, Tensor] = {}

    def param(self, name: str, value) -> Tensor:
        if name in self.parameters:
            raise ContractError(f"parameter {name!r} registered twice")
        t = Tensor(np.array(value, dtype=np.float64), op="param", graph=self, name=name)
        self.nodes.append(t)
        self.parameters[name] = t
        return t

    def params(self, values: Mapping[str, np.ndarray]) -> Dict[str, Tensor]:
        return {k: self.param(k, v) for k, v in values.items()}


def as_tensor(x: ArrayLike) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _record(op: str, value: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    graph = None
    for p in parents:
        if p.graph is not None:
            if graph is not None and p.graph is not graph:
                raise ContractError("operands belong to different graphs")
            graph = p.graph
    if graph is None:
        return Tensor(value, op=op)
    out = Tensor(value, op=op, parents=parents, backward_fn=backward_fn, graph=graph)
    graph.nodes.append(out)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _record("add", a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _record("sub", a.value - b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _record("neg", -a.value, (a,), lambda g: (-g,))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Broadcasting product; use :func:`elementwise_mul` for the strict form."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _record("mul", a.value * b.value, (a, b),
                   lambda g: (_unbroadcast(g * b.value, a.shape),
                              _unbroadcast(g * a.value, b.shape)))


def elementwise_mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Hadamard product of two tensors of identical shape."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"elementwise_mul: shapes {a.shape} and {b.shape} differ")
    return _record("elementwise_mul", a.value * b.value, (a, b),
                   lambda g: (g * b.value, g * a.value))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.value / b.value
    return _record("div", out, (a, b),
                   lambda g: (_unbroadcast(g / b.value, a.shape),
                              _unbroadcast(-g * out / b.value, b.shape)))


def square(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _record("square", a.value * a.value, (a,), lambda g: (2.0 * a.value * g,))


def sqrt(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return _record("sqrt", out, (a,), lambda g: (g / (2.0 * out),))


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return _record("exp", out, (a,), lambda g: (g * out,))


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _record("log", np.log(a.value), (a,), lambda g: (g / a.value,))


def clip(a: ArrayLike, lo: float, hi: float) -> Tensor:
    """Clamp values; the gradient is zero wherever clamping was active."""
    a = as_tensor(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return _record("clip", np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    active = a.value > 0
    return _record("relu", np.where(active, a.value, 0.0), (a,), lambda g: (g * active,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.value)
    return _record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)
    return _record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def sum_(a: ArrayLike, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def grad(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record("sum", out, (a,), grad)


def mean(a: ArrayLike, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return div(sum_(a, axis=axis, keepdims=keepdims), float(count))


def reshape(a: ArrayLike, shape) -> Tensor:
    a = as_tensor(a)
    return _record("reshape", a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _record("transpose", a.value.T, (a,), lambda g: (g.T,))


def index_select(a: ArrayLike, index) -> Tensor:
    a = as_tensor(a)

    def grad(g):
        out = np.zeros(a.shape)
        np.add.at(out, index, g)
        return (out,)

    return _record("index", a.value[index], (a,), grad)


def concat(parts: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat: nothing to concatenate")
    try:
        out = np.concatenate([p.value for p in parts], axis=axis)
    except ValueError:
        shapes = [p.shape for p in parts]
        raise DimensionError(f"concat: incompatible shapes {shapes}") from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _record("concat", out, parts, lambda g: tuple(np.split(g, bounds, axis=axis)))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product of an m×k and a k×n tensor."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _record("matmul", a.value @ b.value, (a, b),
                   lambda g: (g @ b.value.T, a.value.T @ g))


def linear(x: ArrayLike, weight: ArrayLike) -> Tensor:
    """``weight · x`` for a vector, or ``x · weightᵀ`` row-wise for a batch."""
    x = as_tensor(x)
    if x.ndim == 1:
        return reshape(matmul(reshape(x, (1, -1)), transpose(weight)), (-1,))
    return matmul(x, transpose(weight))


def softmax(z: ArrayLike, axis: int = -1) -> Tensor:
    z = as_tensor(z)
    shifted = z.value - z.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return _record("softmax", out, (z,),
                   lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def take_rows(table: ArrayLike, ids, padding_idx: Optional[int] = 0) -> Tensor:
    """Gather rows of ``table``; the padding row always reads as zeros."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    out = table.value[ids]
    keep = None
    if padding_idx is not None:
        keep = (ids != padding_idx)[..., None]
        out = out * keep

    def grad(g):
        if keep is not None:
            g = g * keep
        acc = np.zeros(table.shape)
        np.add.at(acc, ids, g)
        return (acc,)

    return _record("take_rows", out, (table,), grad)


def cosine_similarity(u: ArrayLike, v: ArrayLike) -> float:
    u = np.asarray(u.value if isinstance(u, Tensor) else u, dtype=np.float64).ravel()
    v = np.asarray(v.value if isinstance(v, Tensor) else v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionError(f"cosine_similarity: shapes {u.shape} and {v.shape} differ")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVectorError("cosine_similarity: zero-norm vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


# ---------------------------------------------------------------------------
# reverse sweep


def backward(graph: Graph, loss: Tensor) -> Dict[str, np.ndarray]:
    """Gradient of a scalar ``loss`` with respect to every graph parameter."""
    if loss.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss.graph is not graph:
        raise ContractError("backward: loss was not computed on this graph")
    grads = {id(loss): np.ones(loss.shape)}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None or node.backward_fn is None:
            if node.op == "param" and g is not None:
                grads[("param", node.name)] = g
            continue
        parent_grads = node.backward_fn(g)
        if node.op in _CORRUPTED:
            parent_grads = tuple(None if pg is None else 1.5 * pg for pg in parent_grads)
        for parent, pg in zip(node.parents, parent_grads):
            if parent.graph is None or pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return {
        name: grads.get(("param", name), np.zeros(t.shape)).reshape(t.shape)
        for name, t in graph.parameters.items()
    }


@contextlib.contextmanager
def corrupt_backward(*ops: str):
    """Deliberately break the backward rule of ``ops`` (negative controls)."""
    added = [op for op in ops if op not in _CORRUPTED]
    _CORRUPTED.update(added)
    try:
        yield
    finally:
        _CORRUPTED.difference_update(added)


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradReport:
    """Analytic-vs-numeric gradient comparison, one entry per parameter."""

    tolerance: float
    max_abs: Dict[str, float] = field(default_factory=dict)
    max_rel: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r <= self.tolerance for r in self.max_rel.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel.values(), default=0.0)


# Entries with |gradient| below this are compared in absolute terms.
REL_FLOOR = 1e-6


def finite_diff_check(
    fn: Callable[[Dict[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradReport:
    """Compare :func:`backward` against central differences.

    ``fn`` maps parameter tensors (registered on a fresh graph) to a scalar
    loss; it is called once for the analytic pass and twice per parameter
    entry. Anything random inside ``fn`` must be reseeded on every call.
    """
    if h <= 0:
        raise ContractError("finite_diff_check: step must be positive")
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    for k, v in base.items():
        if not np.all(np.isfinite(v)):
            raise ContractError(f"finite_diff_check: parameter {k!r} is not finite")

    g = Graph()
    loss = fn(g.params(base))
    analytic = backward(g, loss)

    def scalar(values):
        return float(fn({k: Tensor(v) for k, v in values.items()}).value)

    report = GradReport(tolerance=tol)
    for name, value in base.items():
        numeric = np.zeros_like(value)
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = scalar(base)
            flat[i] = orig - h
            f_minus = scalar(base)
            flat[i] = orig
            numeric.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * h)
        diff = np.abs(analytic[name] - numeric)
        scale = np.maximum(np.maximum(np.abs(analytic[name]), np.abs(numeric)), REL_FLOOR)
        report.max_abs[name] = float(diff.max(initial=0.0))
        report.max_rel[name] = float((diff / scale).max(initial=0.0))
    return report
