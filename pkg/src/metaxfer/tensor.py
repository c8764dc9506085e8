"""Reverse-mode automatic differentiation over float64 arrays.

Every primitive checks its output for NaN/Inf and raises instead of
propagating. Gradients are obtained with :func:`grad`; passing
``create_graph=True`` records the backward computation itself, so the
returned gradients can be differentiated again (needed for the
one-step-lookahead meta-gradient).

Only bias-style broadcasting is supported: two shapes combine when they
are equal or one is a trailing suffix of the other (scalars included).
Anything else is a ShapeError.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, NumericError, ShapeError

_ids = itertools.count()


class _RecordState(threading.local):
    def __init__(self):
        self.enabled = True


_state = _RecordState()


@contextmanager
def recording(enabled: bool):
    """Enable or disable graph recording within a block."""
    prev = _state.enabled
    _state.enabled = enabled
    try:
        yield
    finally:
        _state.enabled = prev


def no_record():
    """Shorthand for ``recording(False)`` (evaluation, plain SGD)."""
    return recording(False)


class Node:
    """One recorded primitive application.

    Node ids increase monotonically with creation, so ids of inputs always
    precede the ids of outputs; iterating ids in decreasing order walks the
    record in reverse topological order.
    """

    __slots__ = ("id", "op", "parents", "vjp")

    def __init__(self, op: str, parents: tuple, vjp):
        self.id = next(_ids)
        self.op = op
        self.parents = parents
        self.vjp = vjp


class Tensor:
    """N-dimensional float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor literal contains non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node = Node("leaf", (), None) if requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detached(self, requires_grad: bool = False) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=requires_grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, tracked={self.node is not None})"


def _result(op: str, data: np.ndarray, parents: tuple, vjp) -> Tensor:
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{op}: produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.node = None
    if _state.enabled and any(
        isinstance(p, Tensor) and p.node is not None for p in parents
    ):
        out.node = Node(op, parents, vjp)
    return out


# ---------------------------------------------------------------------------
# broadcasting helpers (bias-style only)

def _broadcast_shape(sa: tuple, sb: tuple, op: str) -> tuple:
    if sa == sb:
        return sa
    if len(sa) >= len(sb) and sa[len(sa) - len(sb):] == sb:
        return sa
    if len(sb) > len(sa) and sb[len(sb) - len(sa):] == sa:
        return sb
    raise ShapeError(f"{op}: shapes {sa} and {sb} are not bias-broadcastable")


def _sum_to(g: Tensor, shape: tuple) -> Tensor:
    """Reduce a suffix-broadcast gradient back to `shape`."""
    if g.shape == shape:
        return g
    if shape == ():
        return sum_all(g)
    return sum_leading(g, g.ndim - len(shape))


# ---------------------------------------------------------------------------
# primitives

def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a.shape, b.shape, "add")

    def vjp(g):
        return _sum_to(g, a.shape), _sum_to(g, b.shape)

    return _result("add", a.data + b.data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a.shape, b.shape, "sub")

    def vjp(g):
        return _sum_to(g, a.shape), _sum_to(scale(g, -1.0), b.shape)

    return _result("sub", a.data - b.data, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a.shape, b.shape, "mul")

    def vjp(g):
        return _sum_to(mul(g, b), a.shape), _sum_to(mul(g, a), b.shape)

    return _result("mul", a.data * b.data, (a, b), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def vjp(g):
        return (scale(g, c),)

    return _result("scale", a.data * c, (a,), vjp)


def power(a: Tensor, p: float) -> Tensor:
    """Elementwise a**p for a constant exponent (caller owns the domain)."""
    p = float(p)

    def vjp(g):
        return (scale(mul(g, power(a, p - 1.0)), p),)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = a.data ** p
    return _result("power", out, (a,), vjp)


def _swap_last(t: Tensor) -> Tensor:
    axes = list(range(t.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(t, tuple(axes))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    batch_ok = (
        a.ndim == 2
        or b.ndim == 2
        or (a.ndim == b.ndim and a.shape[:-2] == b.shape[:-2])
    )
    if not batch_ok:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} differ")

    def vjp(g):
        ga = _sum_to(matmul(g, _swap_last(b)), a.shape)
        gb = _sum_to(matmul(_swap_last(a), g), b.shape)
        return ga, gb

    return _result("matmul", a.data @ b.data, (a, b), vjp)


def transpose(a: Tensor, axes: tuple | None = None) -> Tensor:
    if axes is None:
        if a.ndim < 2:
            raise ShapeError(f"transpose: need >=2-D, got {a.shape}")
        ax = list(range(a.ndim))
        ax[-1], ax[-2] = ax[-2], ax[-1]
        axes = tuple(ax)
    inv = tuple(np.argsort(axes))

    def vjp(g):
        return (transpose(g, inv),)

    return _result("transpose", np.ascontiguousarray(a.data.transpose(axes)), (a,), vjp)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    old = a.shape

    def vjp(g):
        return (reshape(g, old),)

    return _result("reshape", a.data.reshape(shape), (a,), vjp)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ContractError("concat: need at least one tensor")
    offsets = np.cumsum([0] + [p.shape[axis] for p in parts])

    def vjp(g):
        outs = []
        for i, p in enumerate(parts):
            key = [slice(None)] * g.ndim
            key[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            outs.append(slice_(g, tuple(key)))
        return tuple(outs)

    return _result("concat", np.concatenate([p.data for p in parts], axis=axis), parts, vjp)


def slice_(a: Tensor, key: tuple) -> Tensor:
    """Basic slicing with a tuple of `slice` objects (unit steps only)."""
    for k in key:
        if not isinstance(k, slice) or k.step not in (None, 1):
            raise ContractError("slice: only unit-step slice objects are supported")

    def vjp(g):
        return (pad_slice(g, a.shape, key),)

    return _result("slice", a.data[key].copy(), (a,), vjp)


def pad_slice(a: Tensor, full_shape: tuple, key: tuple) -> Tensor:
    """Inverse of slice_: embed `a` at `key` within zeros of `full_shape`."""
    out = np.zeros(full_shape, dtype=np.float64)
    out[key] = a.data

    def vjp(g):
        return (slice_(g, key),)

    return _result("pad_slice", out, (a,), vjp)


def relu(a: Tensor) -> Tensor:
    mask = Tensor((a.data > 0).astype(np.float64))

    def vjp(g):
        return (mul(g, mask),)

    return _result("relu", np.maximum(a.data, 0.0), (a,), vjp)


def sum_last(a: Tensor) -> Tensor:
    if a.ndim < 1:
        raise ShapeError("sum_last: need >=1-D input")
    k = a.shape[-1]

    def vjp(g):
        return (expand_last(g, k),)

    return _result("sum_last", a.data.sum(axis=-1), (a,), vjp)


def expand_last(a: Tensor, k: int) -> Tensor:
    def vjp(g):
        return (sum_last(g),)

    data = np.ascontiguousarray(np.broadcast_to(a.data[..., None], a.shape + (k,)))
    return _result("expand_last", data, (a,), vjp)


def sum_leading(a: Tensor, n_axes: int) -> Tensor:
    if not 0 < n_axes <= a.ndim:
        raise ShapeError(f"sum_leading: cannot reduce {n_axes} axes of {a.shape}")
    lead = a.shape[:n_axes]

    def vjp(g):
        return (expand_leading(g, lead),)

    return _result("sum_leading", a.data.sum(axis=tuple(range(n_axes))), (a,), vjp)


def expand_leading(a: Tensor, lead: tuple) -> Tensor:
    def vjp(g):
        return (sum_leading(g, len(lead)),)

    data = np.ascontiguousarray(np.broadcast_to(a.data, tuple(lead) + a.shape))
    return _result("expand_leading", data, (a,), vjp)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape

    def vjp(g):
        return (mul(Tensor(np.ones(shape)), g),)

    return _result("sum_all", a.data.sum(), (a,), vjp)


def mean_last(a: Tensor) -> Tensor:
    return scale(sum_last(a), 1.0 / a.shape[-1])


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.size)


def mean(a: Tensor, axis: str = "all") -> Tensor:
    if axis == "all":
        return mean_all(a)
    if axis == "last":
        return mean_last(a)
    raise ContractError(f"mean: unknown axis {axis!r}")


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by per-row max subtraction."""
    if a.ndim < 1:
        raise ShapeError("softmax: need >=1-D input")
    x = a.data
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)
    k = a.shape[-1]
    box: dict[str, Tensor] = {}

    def vjp(g):
        out = box["out"]
        gs = mul(g, out)
        return (mul(out, sub(g, expand_last(sum_last(gs), k))),)

    out = _result("softmax", s, (a,), vjp)
    box["out"] = out
    return out


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to mean 0, variance 1 (no affine part).

    Built from primitives so second-order gradients come for free.
    """
    if a.ndim < 1 or a.shape[-1] < 2:
        raise ShapeError(f"layer_norm: need a last axis of size >=2, got {a.shape}")
    k = a.shape[-1]
    d = sub(a, expand_last(mean_last(a), k))
    var = mean_last(mul(d, d))
    inv = power(add(var, Tensor(eps)), -0.5)
    return mul(d, expand_last(inv, k))


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of `table` (V, d) at integer `ids`; output ids.shape + (d,)."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ContractError("embedding_lookup: ids must be integers")
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ContractError(
            f"embedding_lookup: ids outside [0, {table.shape[0]})"
        )
    n_rows = table.shape[0]

    def vjp(g):
        return (scatter_rows(g, ids, n_rows),)

    return _result("embedding_lookup", table.data[ids], (table,), vjp)


def scatter_rows(a: Tensor, ids: np.ndarray, n_rows: int) -> Tensor:
    """Adjoint of embedding_lookup: sum rows of `a` into `n_rows` slots."""
    d = a.shape[-1]
    out = np.zeros((n_rows, d), dtype=np.float64)
    np.add.at(out, np.asarray(ids).reshape(-1), a.data.reshape(-1, d))

    def vjp(g):
        return (embedding_lookup(g, ids),)

    return _result("scatter_rows", out, (a,), vjp)


def cross_entropy(logits: Tensor, labels: np.ndarray, weights: np.ndarray | None = None) -> Tensor:
    """Weighted mean cross-entropy, fused with log-softmax.

    logits: (N, k); labels: (N,) ints; weights: (N,) floats (rows with
    weight 0 are ignored entirely, so their labels may be out of range).
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 2-D, got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"cross_entropy: labels shape {labels.shape} != ({n},)")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ShapeError(f"cross_entropy: weights shape {w.shape} != ({n},)")
    total = w.sum()
    if total <= 0:
        raise ContractError("cross_entropy: all positions are masked out")
    active = w > 0
    bad = active & ((labels < 0) | (labels >= k))
    if bad.any():
        raise ContractError(
            f"cross_entropy: labels {sorted(set(labels[bad].tolist()))} outside [0, {k})"
        )
    safe = np.where(active, labels, 0)

    x = logits.data
    m = x.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(x - m).sum(axis=1))
    nll = lse - x[np.arange(n), safe]
    loss = float((w * nll).sum() / total)

    onehot = np.zeros((n, k))
    onehot[np.arange(n), safe] = 1.0
    wmat = Tensor(np.broadcast_to((w / total)[:, None], (n, k)).copy())
    onehot_t = Tensor(onehot)

    def vjp(g):
        p = softmax(logits)
        return (mul(mul(sub(p, onehot_t), wmat), g),)

    return _result("cross_entropy", loss, (logits,), vjp)


_OPS: dict[str, Callable] = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "relu": relu,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "embedding_lookup": embedding_lookup,
    "cross_entropy": cross_entropy,
    "mean": mean,
    "scale": scale,
    "transpose": transpose,
    "reshape": reshape,
    "concat": concat,
    "slice": slice_,
}


def apply(op_kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch a primitive by name (shape/finiteness checks included)."""
    try:
        fn = _OPS[op_kind]
    except KeyError:
        raise ContractError(f"apply: unknown op kind {op_kind!r}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# backward

def grad_tensors(
    loss: Tensor, wrt: Sequence[Tensor], create_graph: bool = False
) -> list[Tensor]:
    """Gradients of a scalar `loss` w.r.t. each tensor in `wrt`.

    Tensors not on any recorded path to the loss receive exact zeros. With
    ``create_graph=True`` the returned gradients are themselves recorded
    and can be differentiated again.
    """
    if loss.shape != ():
        raise ContractError(f"grad: loss must be scalar, got shape {loss.shape}")

    want = {t.node.id for t in wrt if t.node is not None}
    captured: dict[int, Tensor] = {}

    if loss.node is not None:
        seen: dict[int, Node] = {}
        stack = [loss.node]
        while stack:
            node = stack.pop()
            if node.id in seen:
                continue
            seen[node.id] = node
            for p in node.parents:
                if isinstance(p, Tensor) and p.node is not None and p.node.id not in seen:
                    stack.append(p.node)

        adjoints: dict[int, Tensor] = {loss.node.id: Tensor(1.0)}
        with recording(create_graph):
            for nid in sorted(seen, reverse=True):
                g = adjoints.pop(nid, None)
                if g is None:
                    continue
                if nid in want:
                    captured[nid] = g
                node = seen[nid]
                if node.vjp is None:
                    continue
                parent_grads = node.vjp(g)
                for p, pg in zip(node.parents, parent_grads):
                    if pg is None or not isinstance(p, Tensor) or p.node is None:
                        continue
                    pid = p.node.id
                    cur = adjoints.get(pid)
                    adjoints[pid] = pg if cur is None else add(cur, pg)

    out = []
    for t in wrt:
        if t.node is not None and t.node.id in captured:
            out.append(captured[t.node.id])
        else:
            out.append(Tensor(np.zeros(t.shape)))
    return out


def finite_difference(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function (test oracle)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * eps)
    return g
