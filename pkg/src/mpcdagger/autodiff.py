"""Reverse-mode automatic differentiation over dense float64 arrays.

The tape is define-by-run: every forward pass builds a fresh :class:`Tape`,
operations on taped tensors append one node each, and :meth:`Tape.backward`
walks the nodes once in reverse order.

Broadcasting is deliberately absent except for the bias of ``affine``; the
explicit ``expand`` op replaces it wherever a value has to be repeated along
a new axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GradMap", "NumericError", "ShapeError", "Tape", "Tensor",
    "add", "affine", "backward", "concat", "divide", "exp", "expand",
    "grad_check", "mul", "negate", "record", "reduce_sum", "reshape",
    "scale", "slice_", "tanh",
]


class ShapeError(ValueError):
    """Operand shapes violate an op's shape rule."""


class NumericError(ArithmeticError):
    """An op produced NaN or Inf."""


class Tensor:
    """Immutable float64 array, optionally attached to a tape node."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape: Tape | None = None, node_id: int | None = None):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.tape = tape
        self.node_id = node_id

    @classmethod
    def _wrap(cls, arr: np.ndarray, tape=None, node_id=None) -> Tensor:
        # skips the defensive copy for arrays produced by ops
        t = cls.__new__(cls)
        arr.flags.writeable = False
        t.data = arr
        t.tape = tape
        t.node_id = node_id
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        tag = f", node={self.node_id}" if self.node_id is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar; everything routes through record()
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, negate(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), negate(self))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return scale(self, 1.0 / float(other))
        return divide(self, _as_tensor(other))

    def __neg__(self):
        return negate(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Node:
    kind: str
    inputs: tuple          # node ids, None for constants
    in_values: tuple       # forward values of the inputs
    value: np.ndarray
    attrs: dict


class GradMap(dict):
    """node_id -> gradient array; also indexable by the leaf Tensor itself."""

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            key = key.node_id
        return super().__getitem__(key)

    def __contains__(self, key):
        if isinstance(key, Tensor):
            key = key.node_id
        return super().__contains__(key)


@dataclass
class Tape:
    nodes: list = field(default_factory=list)
    leaves: set = field(default_factory=set)

    def leaf(self, data) -> Tensor:
        arr = np.array(data, dtype=np.float64)
        _check_finite("leaf", arr)
        node_id = len(self.nodes)
        self.nodes.append(_Node("leaf", (), (), arr, {}))
        self.leaves.add(node_id)
        return Tensor._wrap(arr, self, node_id)

    def __len__(self):
        return len(self.nodes)

    def stored_floats(self, kinds: Sequence[str] | None = None) -> int:
        """Number of float64 values held as forward results (leaves excluded)."""
        return sum(n.value.size for n in self.nodes
                   if n.kind != "leaf" and (kinds is None or n.kind in kinds))

    def backward(self, output: Tensor) -> GradMap:
        return backward(self, output)


# ---------------------------------------------------------------- op rules

def _fw_affine(vals, attrs):
    w, x = vals[0], vals[1]
    out = x @ w.T
    if len(vals) == 3:
        out = out + vals[2]
    return out


def _bw_affine(g, vals, out, attrs):
    w, x = vals[0], vals[1]
    p, q = w.shape
    g2 = g.reshape(-1, p)
    x2 = x.reshape(-1, q)
    grads = [g2.T @ x2, g @ w]
    if len(vals) == 3:
        grads.append(g2.sum(axis=0))
    return grads


def _shape_affine(shapes, attrs):
    w, x = shapes[0], shapes[1]
    if len(w) != 2 or len(x) < 1 or x[-1] != w[1]:
        return False
    return len(shapes) == 2 or shapes[2] == (w[0],)


def _same_shapes(shapes, attrs):
    return all(s == shapes[0] for s in shapes)


def _fw_reduce_sum(vals, attrs):
    axis = attrs.get("axis")
    return np.asarray(vals[0].sum(axis=axis))


def _bw_reduce_sum(g, vals, out, attrs):
    x = vals[0]
    axis = attrs.get("axis")
    if axis is None:
        return [np.full(x.shape, float(g))]
    return [np.broadcast_to(np.expand_dims(g, axis), x.shape).copy()]


def _fw_concat(vals, attrs):
    return np.concatenate(vals, axis=attrs["axis"])


def _bw_concat(g, vals, out, attrs):
    axis = attrs["axis"]
    cuts = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return np.split(g, cuts, axis=axis)


def _shape_concat(shapes, attrs):
    axis = attrs["axis"]
    ref = list(shapes[0])
    try:
        del ref[axis]
    except IndexError:
        return False
    for s in shapes[1:]:
        s = list(s)
        if len(s) != len(shapes[0]):
            return False
        del s[axis]
        if s != ref:
            return False
    return True


def _bw_slice(g, vals, out, attrs):
    full = np.zeros(vals[0].shape)
    full[attrs["index"]] = g
    return [full]


def _fw_expand(vals, attrs):
    x = np.expand_dims(vals[0], attrs["axis"])
    reps = [1] * x.ndim
    reps[attrs["axis"]] = attrs["n"]
    return np.tile(x, reps)


def _shape_reshape(shapes, attrs):
    return int(np.prod(shapes[0], dtype=int)) == int(np.prod(attrs["shape"], dtype=int))


_OPS: dict[str, tuple] = {
    # kind: (arity or None, shape rule, forward, vjp)
    "affine": ((2, 3), _shape_affine, _fw_affine, _bw_affine),
    "tanh": ((1,), None, lambda v, a: np.tanh(v[0]),
             lambda g, v, y, a: [g * (1.0 - y * y)]),
    "add": ((2,), _same_shapes, lambda v, a: v[0] + v[1],
            lambda g, v, y, a: [g, g]),
    "mul": ((2,), _same_shapes, lambda v, a: v[0] * v[1],
            lambda g, v, y, a: [g * v[1], g * v[0]]),
    "exp": ((1,), None, lambda v, a: np.exp(v[0]),
            lambda g, v, y, a: [g * y]),
    "negate": ((1,), None, lambda v, a: -v[0], lambda g, v, y, a: [-g]),
    "scale": ((1,), None, lambda v, a: v[0] * a["c"],
              lambda g, v, y, a: [g * a["c"]]),
    "reduce_sum": ((1,), None, _fw_reduce_sum, _bw_reduce_sum),
    "concat": (None, _shape_concat, _fw_concat, _bw_concat),
    "slice": ((1,), None, lambda v, a: np.array(v[0][a["index"]]), _bw_slice),
    "divide": ((2,), _same_shapes, lambda v, a: v[0] / v[1],
               lambda g, v, y, a: [g / v[1], -g * v[0] / (v[1] * v[1])]),
    "reshape": ((1,), _shape_reshape, lambda v, a: v[0].reshape(a["shape"]),
                lambda g, v, y, a: [g.reshape(v[0].shape)]),
    "expand": ((1,), None, _fw_expand,
               lambda g, v, y, a: [g.sum(axis=a["axis"])]),
}

OP_KINDS = tuple(_OPS)


def _check_finite(kind: str, arr: np.ndarray) -> None:
    # cheap path: a finite sum implies every entry is finite
    if np.isfinite(arr.sum()):
        return
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{kind}: non-finite value in output of shape {arr.shape}")


def record(kind: str, inputs: Sequence[Tensor], **attrs) -> Tensor:
    """Evaluate op ``kind`` on ``inputs``; append a tape node if any input is taped."""
    try:
        arity, shape_rule, forward, _ = _OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    inputs = [_as_tensor(t) for t in inputs]
    if arity is not None and len(inputs) not in arity:
        raise ShapeError(f"{kind}: expected {arity} inputs, got {len(inputs)}")
    shapes = [t.shape for t in inputs]
    if shape_rule is not None and not shape_rule(shapes, attrs):
        raise ShapeError(f"{kind}: incompatible shapes {shapes}")
    vals = tuple(t.data for t in inputs)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = np.asarray(forward(vals, attrs), dtype=np.float64)
    _check_finite(kind, out)

    tapes = {id(t.tape): t.tape for t in inputs if t.tape is not None}
    if not tapes:
        return Tensor._wrap(out)
    if len(tapes) > 1:
        raise ValueError(f"{kind}: inputs recorded on different tapes")
    tape = next(iter(tapes.values()))
    node_id = len(tape.nodes)
    tape.nodes.append(_Node(kind, tuple(t.node_id for t in inputs), vals, out, attrs))
    return Tensor._wrap(out, tape, node_id)


def backward(tape: Tape, output: Tensor) -> GradMap:
    """Gradients of the scalar ``output`` with respect to every leaf of ``tape``."""
    if output.tape is not tape or output.node_id is None:
        raise ValueError("backward: output is not recorded on this tape")
    if output.size != 1:
        raise ShapeError(f"backward: output must be scalar, got shape {output.shape}")
    grads: dict[int, np.ndarray] = {output.node_id: np.ones(output.shape)}
    for nid in range(output.node_id, -1, -1):
        g = grads.get(nid)
        node = tape.nodes[nid]
        if g is None or node.kind == "leaf":
            continue
        vjp = _OPS[node.kind][3]
        for src, gin in zip(node.inputs, vjp(g, node.in_values, node.value, node.attrs)):
            if src is None:
                continue
            if src in grads:
                grads[src] = grads[src] + gin
            else:
                grads[src] = gin
        del grads[nid]
    out = GradMap()
    for lid in sorted(tape.leaves):
        out[lid] = grads.get(lid, np.zeros(tape.nodes[lid].value.shape))
    return out


# ---------------------------------------------------------------- op sugar

def affine(w: Tensor, x: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w.T + b`` over the last axis of ``x``; ``b`` is the only broadcast."""
    return record("affine", (w, x) if b is None else (w, x, b))


def tanh(x: Tensor) -> Tensor:
    return record("tanh", (x,))


def add(a: Tensor, b: Tensor) -> Tensor:
    return record("add", (a, b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return record("mul", (a, b))


def exp(x: Tensor) -> Tensor:
    return record("exp", (x,))


def negate(x: Tensor) -> Tensor:
    return record("negate", (x,))


def scale(x: Tensor, c: float) -> Tensor:
    return record("scale", (x,), c=float(c))


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    return record("reduce_sum", (x,), axis=axis)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    return record("concat", tuple(xs), axis=axis)


def slice_(x: Tensor, index) -> Tensor:
    return record("slice", (x,), index=index)


def divide(a: Tensor, b: Tensor) -> Tensor:
    return record("divide", (a, b))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return record("reshape", (x,), shape=tuple(shape))


def expand(x: Tensor, axis: int, n: int) -> Tensor:
    """Insert a new axis at ``axis`` and repeat ``x`` ``n`` times along it."""
    return record("expand", (x,), axis=axis, n=int(n))


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Max relative error between the taped gradient of ``f`` and central differences.

    The error per coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    x = np.array(x, dtype=np.float64)
    tape = Tape()
    xl = tape.leaf(x)
    analytic = tape.backward(f(xl))[xl]
    numeric = np.empty_like(x)
    flat = numeric.reshape(-1)
    for i in range(x.size):
        xp = x.copy().reshape(-1)
        xm = xp.copy()
        xp[i] += h
        xm[i] -= h
        fp = f(Tensor(xp.reshape(x.shape))).item()
        fm = f(Tensor(xm.reshape(x.shape))).item()
        flat[i] = (fp - fm) / (2.0 * h)
    if not np.all(np.isfinite(numeric)):
        raise NumericError("grad_check: non-finite finite-difference estimate")
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max()) if err.size else 0.0
