"""Small reverse-mode autodiff engine over numpy arrays.

Forward values are computed eagerly as operators are applied; every result
remembers the operator instance and its inputs, so the recorded graph can be
replayed (:func:`evaluate`) or differentiated (:func:`backward`).  The
operator set is deliberately closed: it covers what GRUs, attention, softmax
cross-entropy and a 1-D text CNN need, nothing more.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Operator inputs have incompatible shapes."""

    def __init__(self, op: str, detail: str, node: str | None = None):
        where = f"{op}" if node is None else f"{op} (node {node!r})"
        super().__init__(f"{where}: {detail}")
        self.op = op
        self.detail = detail
        self.node = node


class GradientError(RuntimeError):
    """Raised when backward is called on something that is not a scalar."""


@contextlib.contextmanager
def no_grad():
    """Apply operators without recording a graph."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "parents", "name")

    # keep numpy from hijacking `ndarray * Tensor`
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.op = None
        self.parents = ()
        self.name = name

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        op = f" op={self.op.name}" if self.op is not None else ""
        return f"Tensor(shape={self.shape}{tag}{op}, requires_grad={self.requires_grad})"

    # -- operator sugar --------------------------------------------------------
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def parameter(data, name: str | None = None, dtype=np.float64) -> Tensor:
    return Tensor(np.array(data, dtype=dtype), requires_grad=True, name=name)


# ---------------------------------------------------------------------------
# graph machinery


class Op:
    """One node's operator.  Instances may stash forward context on self."""

    name = "op"

    def forward(self, *xs):
        raise NotImplementedError

    def backward(self, g, *xs):
        raise NotImplementedError


def _apply(op: Op, *inputs: Tensor, node: str | None = None) -> Tensor:
    xs = [t.data for t in inputs]
    try:
        out = op.forward(*xs)
    except ShapeError as exc:
        if node is None or exc.node is not None:
            raise
        raise ShapeError(exc.op, exc.detail, node) from None
    except (ValueError, IndexError) as exc:
        raise ShapeError(op.name, str(exc), node) from None
    t = Tensor.__new__(Tensor)
    t.data = out
    t.grad = None
    t.name = node
    if _GRAD_ENABLED:
        t.requires_grad = any(p.requires_grad for p in inputs)
        t.op = op
        t.parents = inputs
    else:
        t.requires_grad = False
        t.op = None
        t.parents = ()
    return t


def _topo(root: Tensor, grad_only: bool) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and (p.requires_grad or not grad_only):
                stack.append((p, False))
    return order


class Graph:
    """Topologically ordered view of everything a root tensor depends on."""

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes = _topo(root, grad_only=False)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if n.op is None]


def evaluate(graph: Graph) -> Tensor:
    """Recompute every node from the current leaf values; returns the root."""
    for node in graph.nodes:
        if node.op is not None:
            try:
                node.data = node.op.forward(*[p.data for p in node.parents])
            except ShapeError as exc:
                raise ShapeError(exc.op, exc.detail, node.name) from None
            except (ValueError, IndexError) as exc:
                raise ShapeError(node.op.name, str(exc), node.name) from None
    return graph.root


def backward(root) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every requires_grad leaf."""
    if isinstance(root, Graph):
        root = root.root
    if root.data.size != 1:
        raise GradientError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(_topo(root, grad_only=True)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.op is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        in_grads = node.op.backward(g, *[p.data for p in node.parents])
        for p, pg in zip(node.parents, in_grads):
            if pg is None or not p.requires_grad:
                continue
            k = id(p)
            if k in grads:
                grads[k] = grads[k] + pg
            else:
                grads[k] = pg


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise


class Add(Op):
    name = "add"

    def forward(self, a, b):
        return a + b

    def backward(self, g, a, b):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


class Sub(Op):
    name = "sub"

    def forward(self, a, b):
        return a - b

    def backward(self, g, a, b):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


class Mul(Op):
    name = "mul"

    def forward(self, a, b):
        return a * b

    def backward(self, g, a, b):
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


class Sigmoid(Op):
    name = "sigmoid"

    def forward(self, x):
        # split by sign to avoid overflow in exp
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self.out = out
        return out

    def backward(self, g, x):
        s = self.out
        return (g * s * (1.0 - s),)


class Tanh(Op):
    name = "tanh"

    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, g, x):
        return (g * (1.0 - self.out * self.out),)


class Log(Op):
    name = "log"

    def forward(self, x):
        return np.log(x)

    def backward(self, g, x):
        return (g / x,)


class ClampMin(Op):
    name = "clamp_min"

    def __init__(self, lo: float):
        self.lo = lo

    def forward(self, x):
        return np.maximum(x, self.lo)

    def backward(self, g, x):
        return (g * (x > self.lo),)


class Softmax(Op):
    name = "softmax"

    def __init__(self, axis: int):
        self.axis = axis

    def forward(self, x):
        z = x - x.max(axis=self.axis, keepdims=True)
        e = np.exp(z)
        self.out = e / e.sum(axis=self.axis, keepdims=True)
        return self.out

    def backward(self, g, x):
        s = self.out
        return (s * (g - (g * s).sum(axis=self.axis, keepdims=True)),)


# ---------------------------------------------------------------------------
# linear algebra and reductions


class MatMul(Op):
    name = "matmul"

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(self.name, f"operands must be at least 2-D, got {a.shape} @ {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(self.name, f"inner dimensions differ: {a.shape} @ {b.shape}")
        return a @ b

    def backward(self, g, a, b):
        if b.ndim == 2 and a.ndim > 2:
            # fold leading axes instead of materialising a broadcast copy of b
            ga = g @ b.T
            gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
        ga = _unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)
        return ga, gb


class Sum(Op):
    name = "sum"

    def __init__(self, axis, keepdims: bool):
        self.axis = axis
        self.keepdims = keepdims

    def forward(self, x):
        return np.asarray(x.sum(axis=self.axis, keepdims=self.keepdims))

    def backward(self, g, x):
        if self.axis is not None and not self.keepdims:
            g = np.expand_dims(g, self.axis)
        return (np.broadcast_to(g, x.shape).copy(),)


class Reshape(Op):
    name = "reshape"

    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, x):
        return x.reshape(self.shape)

    def backward(self, g, x):
        return (g.reshape(x.shape),)


class Transpose(Op):
    name = "transpose"

    def __init__(self, axes):
        self.axes = tuple(axes)

    def forward(self, x):
        return np.transpose(x, self.axes)

    def backward(self, g, x):
        return (np.transpose(g, np.argsort(self.axes)),)


class GetItem(Op):
    name = "slice"

    def __init__(self, index):
        self.index = index

    def forward(self, x):
        return x[self.index]

    def backward(self, g, x):
        out = np.zeros_like(x)
        # add.at so that repeated fancy indices accumulate
        np.add.at(out, self.index, g)
        return (out,)


class Concat(Op):
    name = "concat"

    def __init__(self, axis: int):
        self.axis = axis

    def forward(self, *xs):
        self.sizes = [x.shape[self.axis] for x in xs]
        return np.concatenate(xs, axis=self.axis)

    def backward(self, g, *xs):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(g, cuts, axis=self.axis))


class Stack(Op):
    name = "stack"

    def __init__(self, axis: int):
        self.axis = axis

    def forward(self, *xs):
        return np.stack(xs, axis=self.axis)

    def backward(self, g, *xs):
        return tuple(np.moveaxis(g, self.axis, 0))


class Gather(Op):
    """Row lookup ``table[ids]`` (embedding lookup)."""

    name = "gather"

    def __init__(self, ids: np.ndarray):
        self.ids = np.asarray(ids, dtype=np.int64)

    def forward(self, table):
        if table.ndim != 2:
            raise ShapeError(self.name, f"table must be 2-D, got {table.shape}")
        if self.ids.size and (self.ids.min() < 0 or self.ids.max() >= table.shape[0]):
            raise ShapeError(self.name, f"ids outside [0, {table.shape[0]})")
        return table[self.ids]

    def backward(self, g, table):
        out = np.zeros_like(table)
        np.add.at(out, self.ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (out,)


class Conv1d(Op):
    """Valid 1-D convolution over the time axis of a (B, T, C) input.

    Weights are (K, C, F), bias is (F,); output is (B, T - K + 1, F).
    """

    name = "conv1d"

    def forward(self, x, w, b):
        if x.ndim != 3 or w.ndim != 3 or b.ndim != 1:
            raise ShapeError(self.name, f"expected (B,T,C), (K,C,F), (F,), got {x.shape}, {w.shape}, {b.shape}")
        B, T, C = x.shape
        K, C2, F = w.shape
        if C != C2 or b.shape[0] != F:
            raise ShapeError(self.name, f"channel mismatch: {x.shape}, {w.shape}, {b.shape}")
        if T < K:
            raise ShapeError(self.name, f"sequence length {T} shorter than kernel {K}")
        L = T - K + 1
        cols = np.concatenate([x[:, k:k + L, :] for k in range(K)], axis=2)
        self.cols = cols
        return cols @ w.reshape(K * C, F) + b

    def backward(self, g, x, w, b):
        K, C, F = w.shape
        L = g.shape[1]
        gw = (self.cols.reshape(-1, K * C).T @ g.reshape(-1, F)).reshape(w.shape)
        gb = g.sum(axis=(0, 1))
        gcols = g @ w.reshape(K * C, F).T
        gx = np.zeros_like(x)
        for k in range(K):
            gx[:, k:k + L, :] += gcols[:, :, k * C:(k + 1) * C]
        return gx, gw, gb


class MaxOverTime(Op):
    """Max over axis 1 of (B, T, F); optional (B, T) mask of valid positions."""

    name = "max_over_time"

    def __init__(self, mask: np.ndarray | None = None):
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)

    def forward(self, x):
        if x.ndim != 3:
            raise ShapeError(self.name, f"expected (B,T,F), got {x.shape}")
        if self.mask is not None:
            if self.mask.shape != x.shape[:2]:
                raise ShapeError(self.name, f"mask {self.mask.shape} does not match {x.shape[:2]}")
            if not self.mask.any(axis=1).all():
                raise ShapeError(self.name, "a row has no valid positions")
            x = np.where(self.mask[:, :, None], x, -np.inf)
        # argmax breaks ties at the first index
        self.idx = x.argmax(axis=1)
        return np.take_along_axis(x, self.idx[:, None, :], axis=1)[:, 0, :]

    def backward(self, g, x):
        out = np.zeros_like(x)
        np.put_along_axis(out, self.idx[:, None, :], g[:, None, :], axis=1)
        return (out,)


# ---------------------------------------------------------------------------
# functional API


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _apply(Add(), a, b)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _apply(Sub(), a, b)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _apply(Mul(), a, b)


def _pair(a, b):
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    return as_tensor(a, like=b), b


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return _apply(MatMul(), a, b)


def sigmoid(x: Tensor) -> Tensor:
    return _apply(Sigmoid(), x)


def tanh(x: Tensor) -> Tensor:
    return _apply(Tanh(), x)


def log(x: Tensor) -> Tensor:
    return _apply(Log(), x)


def clamp_min(x: Tensor, lo: float) -> Tensor:
    return _apply(ClampMin(lo), x)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return _apply(Softmax(axis), x)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return _apply(Sum(axis, keepdims), x)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(x: Tensor, shape) -> Tensor:
    return _apply(Reshape(shape), x)


def transpose(x: Tensor, axes) -> Tensor:
    return _apply(Transpose(axes), x)


def getitem(x: Tensor, index) -> Tensor:
    return _apply(GetItem(index), x)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    return _apply(Concat(axis), *xs)


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    return _apply(Stack(axis), *xs)


def gather(table: Tensor, ids) -> Tensor:
    return _apply(Gather(ids), table)


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return _apply(Conv1d(), x, w, b)


def max_over_time(x: Tensor, mask=None) -> Tensor:
    return _apply(MaxOverTime(mask), x)


def leaves_with_grad(root: Tensor) -> Iterable[Tensor]:
    return [n for n in _topo(root, grad_only=True) if n.op is None]
