"""Dense reverse-mode automatic differentiation on float64 numpy arrays.

Operations executed inside an active :class:`Tape` are recorded in order;
``Tape.backward`` replays them in reverse, accumulating into ``Tensor.grad``.
Only the operations the graph model needs are provided.

Example
-------
>>> a = Tensor([[1.0, 2.0]], requires_grad=True)
>>> with Tape() as tape:
...     loss = total(matmul(a, Tensor([[1.0], [1.0]])))
>>> tape.backward(loss)
>>> a.grad
array([[1., 1.]])
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

DTYPE = np.float64

_active_tapes: list["Tape"] = []


class DegenerateSegmentWarning(UserWarning):
    """A segment reduction met a segment with no members."""


class Tensor:
    """A float64 array with an accumulated gradient of the same shape."""

    __slots__ = ("data", "_grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 copy: bool = True):
        self.data = np.array(data, dtype=DTYPE) if copy else np.asarray(data, dtype=DTYPE)
        self._grad = None  # allocated on first use
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        self._grad = value

    def _accumulate(self, g: np.ndarray) -> None:
        if self._grad is None:
            self._grad = np.array(g, dtype=DTYPE).reshape(self.data.shape)
        else:
            self._grad += g

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self._grad = None

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # operator sugar
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


@dataclass
class TapeNode:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str


@dataclass
class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; every op whose inputs need gradients is
    appended while the tape is active.  Tapes nest, the innermost records.
    """

    nodes: list[TapeNode] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _active_tapes.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tapes.remove(self)

    def record(self, inputs, output, backward, op) -> None:
        self.nodes.append(TapeNode(tuple(inputs), output, backward, op))

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> None:
        """Propagate d(loss) back to every tensor that requires a gradient.

        Gradients of intermediate results are reset first, so repeated calls
        on the same tape are deterministic; leaf gradients accumulate.
        """
        for node in self.nodes:
            node.output.zero_grad()
        loss.grad = (np.ones_like(loss.data) if seed is None
                     else np.asarray(seed, dtype=DTYPE).reshape(loss.shape).copy())
        for node in reversed(self.nodes):
            g_out = node.output._grad
            if g_out is None:  # output does not reach the loss
                continue
            grads = node.backward(g_out)
            for inp, g in zip(node.inputs, grads):
                if g is not None and inp.requires_grad:
                    inp._accumulate(g)

    def zero_grad(self) -> None:
        for node in self.nodes:
            node.output.zero_grad()
            for inp in node.inputs:
                inp.zero_grad()


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data: np.ndarray, inputs: Sequence[Tensor], backward, op: str) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs, copy=False)
    if needs and _active_tapes:
        _active_tapes[-1].record(inputs, out, backward, op)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def scatter_add(index: np.ndarray, values: np.ndarray, num_segments: int) -> np.ndarray:
    """``out[index[i]] += values[i]``, summing each segment in index order."""
    out = np.zeros((num_segments,) + values.shape[1:])
    if index.size == 0:
        return out
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=num_segments)
    n = index.size
    selector = sparse.csr_matrix((np.ones(n), (index, np.arange(n))), shape=(num_segments, n))
    flat = values.reshape(n, -1)
    return np.asarray(selector @ flat).reshape(out.shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _emit(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)), "mul")


def square(x: Tensor) -> Tensor:
    return _emit(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,), "square")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return _emit(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors (a 1-D ``b`` is a column vector)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise ValueError(f"matmul expects 2-D @ 1-D/2-D, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        if b.data.ndim == 1:
            return np.outer(g, b.data), a.data.T @ g
        return g @ b.data.T, a.data.T @ g

    return _emit(a.data @ b.data, (a, b), backward, "matmul")


# ---------------------------------------------------------------------------
# activations


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _emit(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not np.isfinite(slope):
        raise ValueError("leaky_relu slope must be finite")
    scale = np.where(x.data > 0, 1.0, slope)
    return _emit(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def dropout(x: Tensor, rate: float, training: bool,
            rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity (the same object) outside training or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a seeded generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _emit(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------------------
# reductions and shape ops


def total(x: Tensor) -> Tensor:
    return _emit(np.array(x.data.sum()), (x,),
                 lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean(x: Tensor) -> Tensor:
    n = x.size
    return _emit(np.array(x.data.mean()), (x,),
                 lambda g: (np.full(x.shape, g / n),), "mean")


def sum_rows(x: Tensor) -> Tensor:
    """Sum over the last axis."""
    return _emit(x.data.sum(axis=-1), (x,),
                 lambda g: (np.broadcast_to(g[..., None], x.shape).copy(),), "sum_rows")


def reshape(x: Tensor, shape) -> Tensor:
    return _emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def take(x: Tensor, index) -> Tensor:
    """Basic slicing along the first axis (``x.data[index]`` for a slice)."""
    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _emit(x.data[index], (x,), backward, "take")


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Rows ``x[index]``; repeated indices accumulate in the backward pass."""
    index = np.asarray(index, dtype=np.intp)

    return _emit(x.data[index], (x,),
                 lambda g: (scatter_add(index, g, x.shape[0]),), "gather_rows")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit(np.concatenate([t.data for t in tensors], axis=axis),
                 tensors, backward, "concat")


# ---------------------------------------------------------------------------
# segment (scatter) operations


def segment_sum(values: Tensor, segment_of: np.ndarray, num_segments: int) -> Tensor:
    """Row sums of ``values`` grouped by ``segment_of``."""
    segment_of = np.asarray(segment_of, dtype=np.intp)
    out = scatter_add(segment_of, values.data, num_segments)
    return _emit(out, (values,), lambda g: (g[segment_of],), "segment_sum")


def segment_mean(values: Tensor, segment_of: np.ndarray, num_segments: int) -> Tensor:
    """Per-segment arithmetic mean of rows.

    A segment without members yields a zero row and a
    :class:`DegenerateSegmentWarning`.
    """
    segment_of = np.asarray(segment_of, dtype=np.intp)
    if segment_of.size and segment_of.max() >= num_segments:
        raise ValueError("segment id out of range")
    counts = np.bincount(segment_of, minlength=num_segments).astype(DTYPE)
    if np.any(counts == 0):
        warnings.warn(f"{int(np.sum(counts == 0))} empty segment(s) in segment_mean",
                      DegenerateSegmentWarning, stacklevel=2)
    inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
    shape = (-1,) + (1,) * (values.data.ndim - 1)
    out = scatter_add(segment_of, values.data, num_segments) * inv.reshape(shape)
    return _emit(out, (values,),
                 lambda g: (g[segment_of] * inv[segment_of].reshape(shape),), "segment_mean")


def segment_softmax(scores: Tensor, segment_of: np.ndarray,
                    num_segments: int | None = None) -> Tensor:
    """Softmax of a 1-D score vector within each segment.

    The per-segment maximum is subtracted before exponentiation.
    """
    segment_of = np.asarray(segment_of, dtype=np.intp)
    if num_segments is None:
        num_segments = int(segment_of.max()) + 1 if segment_of.size else 0
    s = scores.data
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, segment_of, s)
    e = np.exp(s - seg_max[segment_of])
    denom = scatter_add(segment_of, e, num_segments)
    out = e / denom[segment_of]

    def backward(g):
        dot = scatter_add(segment_of, g * out, num_segments)
        return (out * (g - dot[segment_of]),)

    return _emit(out, (scores,), backward, "segment_softmax")


def edge_aggregate(weights: Tensor, x: Tensor, src: np.ndarray, dst: np.ndarray,
                   num_segments: int) -> Tensor:
    """``out[j] = sum over edges e with dst[e] == j of weights[e] * x[src[e]]``.

    Equivalent to ``segment_sum(reshape(weights, (-1, 1)) * gather_rows(x, src), dst)``
    but evaluated as one sparse product.
    """
    src = np.asarray(src, dtype=np.intp)
    dst = np.asarray(dst, dtype=np.intp)
    adj = sparse.csr_matrix((weights.data, (dst, src)), shape=(num_segments, x.shape[0]))
    # csr construction sums duplicate (dst, src) pairs, which is still the right result

    def backward(g):
        g_w = np.einsum("ij,ij->i", g[dst], x.data[src])
        g_x = np.asarray(adj.T @ g)
        return g_w, g_x

    return _emit(np.asarray(adj @ x.data), (weights, x), backward, "edge_aggregate")
