"""Reverse-mode autodiff on float64 numpy arrays.

Every op records its inputs and a backward closure on the output tensor, so a
fresh graph ("tape") is built on each forward pass and torn down with it.
`backward(loss)` walks the recorded graph in reverse topological order and
accumulates gradients into every reachable tensor with requires_grad=True.

All data is float64. Shapes follow numpy; the last two axes are the
(sequence, feature) axes for the transformer ops, and leading axes broadcast
as a batch.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, ShapeError

_GRAD_ENABLED = True


@contextlib.contextmanager
def inference_mode():
    """Disable graph recording inside the block (pure forward, no backward)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _sum_to_shape(arr: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reverse numpy broadcasting: reduce `arr` back down to `shape`."""
    extra = arr.ndim - len(shape)
    if extra > 0:
        arr = arr.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and arr.shape[i] != 1)
    if axes:
        arr = arr.sum(axis=axes, keepdims=True)
    return arr


def _make(out_data: np.ndarray, parents: tuple[Tensor, ...],
          backward: Callable[[np.ndarray], None]) -> Tensor:
    req = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(out_data, requires_grad=req)
    if req:
        out._parents = parents
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-D, got {a.shape} x {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: inner dims mismatch {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _sum_to_shape(g @ np.swapaxes(bd, -1, -2), ad.shape))
        if b.requires_grad:
            _accumulate(b, _sum_to_shape(np.swapaxes(ad, -1, -2) @ g, bd.shape))

    return _make(ad @ bd, (a, b), bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _sum_to_shape(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _sum_to_shape(g, b.data.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _sum_to_shape(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _sum_to_shape(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _sum_to_shape(g * bd, ad.shape))
        if b.requires_grad:
            _accumulate(b, _sum_to_shape(g * ad, bd.shape))

    return _make(ad * bd, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * c)

    return _make(a.data * c, (a,), bw)


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(f"layernorm: gain/bias must be ({d},), got {gain.shape}/{bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        if gain.requires_grad:
            _accumulate(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            _accumulate(bias, g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            dxh = g * gain.data
            term = dxh - dxh.mean(axis=-1, keepdims=True) \
                - xhat * (dxh * xhat).mean(axis=-1, keepdims=True)
            _accumulate(x, term * inv)

    return _make(xhat * gain.data + bias.data, (x, gain, bias), bw)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        if x.requires_grad:
            _accumulate(x, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _make(y, (x,), bw)


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))

    def bw(g):
        if x.requires_grad:
            pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
            _accumulate(x, g * (cdf + x.data * pdf))

    return _make(x.data * cdf, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    z = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def bw(g):
        if x.requires_grad:
            _accumulate(x, g * y * (1.0 - y))

    return _make(y, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)

    def bw(g):
        if x.requires_grad:
            _accumulate(x, g * (1.0 - y * y))

    return _make(y, (x,), bw)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeError(f"embedding_lookup: id out of range for table {table.shape}")

    def bw(g):
        if table.requires_grad:
            buf = np.zeros_like(table.data)
            np.add.at(buf, ids, g)
            _accumulate(table, buf)

    return _make(table.data[ids], (table,), bw)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the sequence axis (-2)."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_seq: no parts")
    widths = {p.data.shape[-1] for p in parts}
    if len(widths) != 1:
        raise ShapeError(f"concat_seq: feature widths differ: {sorted(widths)}")
    extents = [p.data.shape[-2] for p in parts]

    def bw(g):
        lo = 0
        for p, n in zip(parts, extents):
            if p.requires_grad and n:
                _accumulate(p, g[..., lo:lo + n, :])
            lo += n

    return _make(np.concatenate([p.data for p in parts], axis=-2), tuple(parts), bw)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the feature axis (-1)."""
    parts = [_as_tensor(p) for p in parts]
    extents = [p.data.shape[-1] for p in parts]

    def bw(g):
        lo = 0
        for p, n in zip(parts, extents):
            if p.requires_grad and n:
                _accumulate(p, g[..., lo:lo + n])
            lo += n

    return _make(np.concatenate([p.data for p in parts], axis=-1), tuple(parts), bw)


def slice_rows(x: Tensor, lo: int, hi: int) -> Tensor:
    x = _as_tensor(x)

    def bw(g):
        if x.requires_grad:
            buf = np.zeros_like(x.data)
            buf[..., lo:hi, :] = g
            _accumulate(x, buf)

    return _make(x.data[..., lo:hi, :].copy(), (x,), bw)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    old = x.data.shape

    def bw(g):
        if x.requires_grad:
            _accumulate(x, g.reshape(old))

    return _make(x.data.reshape(shape), (x,), bw)


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    x = _as_tensor(x)

    def bw(g):
        if x.requires_grad:
            _accumulate(x, np.swapaxes(g, a, b))

    return _make(np.ascontiguousarray(np.swapaxes(x.data, a, b)), (x,), bw)


def transpose(x: Tensor) -> Tensor:
    return swapaxes(x, -1, -2)


def expand_batch(x: Tensor, n: int) -> Tensor:
    """Tile x along a new leading batch axis; backward sums over it."""
    x = _as_tensor(x)

    def bw(g):
        if x.requires_grad:
            _accumulate(x, g.sum(axis=0))

    return _make(np.ascontiguousarray(np.broadcast_to(x.data, (n,) + x.data.shape)), (x,), bw)


def mean_pool(x: Tensor) -> Tensor:
    """Mean over the sequence axis (-2), keepdims."""
    x = _as_tensor(x)
    n = x.data.shape[-2]
    if n == 0:
        raise ShapeError("mean_pool: empty sequence")

    def bw(g):
        if x.requires_grad:
            _accumulate(x, np.broadcast_to(g / n, x.data.shape))

    return _make(x.data.mean(axis=-2, keepdims=True), (x,), bw)


def sum_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)

    def bw(g):
        if x.requires_grad:
            _accumulate(x, np.broadcast_to(g, x.data.shape))

    return _make(np.asarray(x.data.sum()), (x,), bw)


def l2_normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize each row (last axis) to unit L2 norm."""
    x = _as_tensor(x)
    s = (x.data * x.data).sum(axis=-1, keepdims=True)
    r = 1.0 / np.sqrt(s + eps)
    y = x.data * r

    def bw(g):
        if x.requires_grad:
            dot = (g * x.data).sum(axis=-1, keepdims=True)
            _accumulate(x, g * r - x.data * (dot * r ** 3))

    return _make(y, (x,), bw)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy of rows of logits (n, C) against int targets (n,)."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 2-D, got {logits.shape}")
    n, c = logits.data.shape
    if targets.shape != (n,):
        raise ShapeError(f"cross_entropy: targets must be ({n},), got {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise ShapeError(f"cross_entropy: target id out of range for {c} classes")
    m = logits.data.max(axis=-1, keepdims=True)
    e = np.exp(logits.data - m)
    z = e.sum(axis=-1, keepdims=True)
    lse = (m + np.log(z)).ravel()
    losses = lse - logits.data[np.arange(n), targets]

    def bw(g):
        if logits.requires_grad:
            p = e / z
            p[np.arange(n), targets] -= 1.0
            _accumulate(logits, (float(g) / n) * p)

    return _make(np.asarray(losses.mean()), (logits,), bw)


# Dispatcher over the documented op kinds (scale takes its factor as a plain
# float, embedding_lookup/cross_entropy take int arrays as second input).
OP_KINDS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "layernorm": layernorm,
    "softmax": softmax,
    "gelu": gelu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "embedding_lookup": embedding_lookup,
    "concat_seq": concat_rows,
    "concat_cols": concat_cols,
    "slice_rows": slice_rows,
    "reshape": reshape,
    "swapaxes": swapaxes,
    "expand_batch": expand_batch,
    "mean_pool": mean_pool,
    "sum": sum_all,
    "l2_normalize": l2_normalize_rows,
    "cross_entropy": cross_entropy,
}


def forward_op(kind: str, *inputs):
    try:
        fn = OP_KINDS[kind]
    except KeyError:
        raise ShapeError(f"unknown op kind: {kind!r}") from None
    return fn(*inputs)


def backward(loss: Tensor) -> None:
    """Populate .grad on every tensor reachable from `loss` that requires grad."""
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("backward: loss does not require grad (empty tape)")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
