"""Reverse-mode automatic differentiation over float64 arrays.

A ``Node`` holds a value (rank 0 for scalars) plus the op that produced it and
a vector-Jacobian product closure. Graphs are built eagerly by calling the op
functions below and are differentiated with ``backward``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np
from scipy.special import expit

from src.errors import NumericError, UsageError

OP_KINDS = frozenset(
    {
        "input",
        "add",
        "sub",
        "mul",
        "div",
        "exp",
        "log",
        "dot",
        "scale",
        "softplus",
        "l2norm",
        "matmul",
        "transpose",
        "tanh",
        "sum",
        "tile",
        "take",
    }
)

Vjp = Callable[[np.ndarray], Sequence[np.ndarray]]


@dataclass(frozen=True, eq=False)
class Node:
    value: np.ndarray
    op: str
    parents: tuple["Node", ...] = ()
    vjp: Vjp | None = field(default=None, repr=False)
    name: str | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __add__(self, other: "Node") -> "Node":
        return add(self, other)


@dataclass(frozen=True)
class Gradient:
    """Per-parameter gradients keyed by parameter name."""

    values: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def keys(self):
        return self.values.keys()

    def items(self):
        return self.values.items()

    def flat(self) -> np.ndarray:
        if not self.values:
            return np.zeros(0)
        return np.concatenate([np.ravel(self.values[k]) for k in sorted(self.values)])


def _check_finite(op: str, value: np.ndarray) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericError(op)


def _make(op: str, value: np.ndarray, parents: tuple[Node, ...], vjp: Vjp) -> Node:
    value = np.asarray(value, dtype=np.float64)
    _check_finite(op, value)
    return Node(value=value, op=op, parents=parents, vjp=vjp)


def _same_shape(op: str, a: Node, b: Node) -> None:
    if a.shape != b.shape:
        raise UsageError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def param(value: np.ndarray | float, name: str) -> Node:
    value = np.array(value, dtype=np.float64)
    _check_finite("input", value)
    return Node(value=value, op="input", name=name)


def constant(value: np.ndarray | float) -> Node:
    value = np.array(value, dtype=np.float64)
    _check_finite("input", value)
    return Node(value=value, op="input")


def as_node(value: Node | np.ndarray | float) -> Node:
    return value if isinstance(value, Node) else constant(value)


def add(a: Node, b: Node) -> Node:
    _same_shape("add", a, b)
    return _make("add", a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Node, b: Node) -> Node:
    _same_shape("sub", a, b)
    return _make("sub", a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: Node, b: Node) -> Node:
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return _make("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def div(a: Node, b: Node) -> Node:
    _same_shape("div", a, b)
    av, bv = a.value, b.value
    return _make("div", av / bv, (a, b), lambda g: (g / bv, -g * av / (bv * bv)))


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a: Node) -> Node:
    av = a.value
    if np.any(av <= 0):
        raise NumericError("log", "log of a non-positive value")
    return _make("log", np.log(av), (a,), lambda g: (g / av,))


def dot(a: Node, b: Node) -> Node:
    if a.value.ndim != 1:
        raise UsageError("dot expects 1-d operands")
    _same_shape("dot", a, b)
    av, bv = a.value, b.value
    return _make("dot", np.dot(av, bv), (a, b), lambda g: (g * bv, g * av))


def scale(a: Node, factor: float) -> Node:
    factor = float(factor)
    return _make("scale", a.value * factor, (a,), lambda g: (g * factor,))


def softplus(a: Node) -> Node:
    z = a.value
    out = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return _make("softplus", out, (a,), lambda g: (g * expit(z),))


def l2norm(a: Node) -> Node:
    """Normalize a vector, or each row of a matrix, to unit L2 length."""
    x = a.value
    if x.ndim not in (1, 2):
        raise UsageError("l2norm expects a vector or a matrix")
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise NumericError("l2norm", "l2norm of a zero vector")
    y = x / norms

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        proj = np.sum(y * g, axis=-1, keepdims=True)
        return ((g - y * proj) / norms,)

    return _make("l2norm", y, (a,), vjp)


def matmul(a: Node, b: Node) -> Node:
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise UsageError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")
    return _make("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise UsageError("transpose expects a matrix")
    return _make("transpose", a.value.T, (a,), lambda g: (g.T,))


def tanh(a: Node) -> Node:
    out = np.tanh(a.value)
    return _make("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def sum_(a: Node, axis: int | None = None) -> Node:
    if axis not in (None, 0):
        raise UsageError("sum supports axis=None or axis=0")
    shape = a.shape
    if axis is None:
        return _make("sum", np.sum(a.value), (a,), lambda g: (np.full(shape, float(g)),))
    return _make("sum", np.sum(a.value, axis=0), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def tile(a: Node, rows: int) -> Node:
    """Stack a vector ``rows`` times into a matrix."""
    if a.value.ndim != 1:
        raise UsageError("tile expects a vector")
    out = np.tile(a.value, (rows, 1))
    return _make("tile", out, (a,), lambda g: (np.sum(g, axis=0),))


def take(a: Node, indices: int | Sequence[int] | np.ndarray, axis: int = 0) -> Node:
    av = a.value
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take(av, idx, axis=axis)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(av)
        # add.at writes through the moved-axis view; scalar indices drop the axis from g.
        g_moved = g if idx.ndim == 0 else np.moveaxis(g, axis, 0)
        np.add.at(np.moveaxis(grad, axis, 0), idx, g_moved)
        return (grad,)

    return _make("take", out, (a,), vjp)


def _topological_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Node, wrt: Mapping[str, Node]) -> Gradient:
    """Return d(root)/d(p) for every node in ``wrt``; unreachable ones get zeros."""
    if root.value.ndim != 0:
        raise UsageError(f"backward needs a scalar root, got shape {root.shape}")

    grads: dict[int, np.ndarray] = {id(root): np.ones(())}
    for node in reversed(_topological_order(root)):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        for parent, contribution in zip(node.parents, node.vjp(g)):
            contribution = np.asarray(contribution, dtype=np.float64)
            _check_finite(node.op, contribution)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contribution
            else:
                grads[key] = contribution

    return Gradient(
        values={
            name: np.array(grads.get(id(node), np.zeros_like(node.value)), dtype=np.float64)
            for name, node in wrt.items()
        }
    )
