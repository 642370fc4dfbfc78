# numerics/ops.py
"""Differentiable operations over :class:`Tensor`.

Every op checks shapes up front (no implicit broadcasting), computes its
output with numpy and, when any input requires a gradient, records a backward
closure that pushes exact analytic gradients to its inputs.
"""
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import DimensionError, DomainError
from .tensor import Tensor, as_array, needs_grad

Scalar = Union[int, float]


def _make(values, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    if needs_grad(parents):
        return Tensor(values, requires_grad=True, parents=tuple(parents), backward=backward, op=op)
    return Tensor(values, op=op)


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(op, a.shape, b.shape)


def _rank(op: str, t: Tensor, *ranks: int) -> None:
    if t.values.ndim not in ranks:
        raise DimensionError(op, t.shape, tuple(ranks))


def as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if like is not None and arr.ndim == 0 and like.values.ndim > 0:
        arr = np.full(like.shape, float(arr))
    return Tensor(arr, op='const')


# elementwise ----------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('add', a, b)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)
    return _make(a.values + b.values, (a, b), backward, 'add')


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('sub', a, b)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(-g)
    return _make(a.values - b.values, (a, b), backward, 'sub')


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise product."""
    _same_shape('mul', a, b)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * b.values)
        if b.requires_grad:
            b.accumulate(g * a.values)
    return _make(a.values * b.values, (a, b), backward, 'mul')


def scale(a: Tensor, c: Scalar) -> Tensor:
    c = float(c)

    def backward(g):
        a.accumulate(g * c)
    return _make(a.values * c, (a,), backward, 'scale')


def add_scalar(a: Tensor, c: Scalar) -> Tensor:
    def backward(g):
        a.accumulate(g)
    return _make(a.values + float(c), (a,), backward, 'add_scalar')


def add_const(a: Tensor, c: np.ndarray) -> Tensor:
    c = np.asarray(c, dtype=np.float64)
    if c.shape != a.shape:
        raise DimensionError('add_const', a.shape, c.shape)

    def backward(g):
        a.accumulate(g)
    return _make(a.values + c, (a,), backward, 'add_const')


def one_minus(a: Tensor) -> Tensor:
    return add_scalar(scale(a, -1.0), 1.0)


def sigmoid(a: Tensor) -> Tensor:
    x = a.values
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        a.accumulate(g * out * (1.0 - out))
    return _make(out, (a,), backward, 'sigmoid')


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)

    def backward(g):
        a.accumulate(g * (1.0 - out * out))
    return _make(out, (a,), backward, 'tanh')


def log(a: Tensor) -> Tensor:
    if np.any(a.values <= 0):
        raise DomainError("log: input must be strictly positive")
    x = a.values

    def backward(g):
        a.accumulate(g / x)
    return _make(np.log(x), (a,), backward, 'log')


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    x = a.values
    inside = (x >= lo) & (x <= hi)

    def backward(g):
        a.accumulate(g * inside)
    return _make(np.clip(x, lo, hi), (a,), backward, 'clamp')


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise maximum; ties send the gradient to ``a``."""
    _same_shape('maximum', a, b)
    take_a = a.values >= b.values

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * take_a)
        if b.requires_grad:
            b.accumulate(g * ~take_a)
    return _make(np.where(take_a, a.values, b.values), (a, b), backward, 'maximum')


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.values.size:
        raise DimensionError('reshape', a.shape, shape)

    def backward(g):
        a.accumulate(g.reshape(a.shape))
    return _make(a.values.reshape(shape), (a,), backward, 'reshape')


# reductions -----------------------------------------------------------------

def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    def backward(g):
        a.accumulate(np.full(a.shape, float(g)))
    return _make(a.values.sum(), (a,), backward, 'sum')


def sum_rows(a: Tensor) -> Tensor:
    """Sum a [k x d] matrix over its rows, giving [d]."""
    _rank('sum_rows', a, 2)

    def backward(g):
        a.accumulate(np.broadcast_to(g, a.shape).copy())
    return _make(a.values.sum(axis=0), (a,), backward, 'sum_rows')


def mean_rows(a: Tensor) -> Tensor:
    _rank('mean_rows', a, 2)
    k = a.shape[0]
    if k == 0:
        raise DomainError("mean_rows: empty matrix")

    def backward(g):
        a.accumulate(np.broadcast_to(g / k, a.shape).copy())
    return _make(a.values.mean(axis=0), (a,), backward, 'mean_rows')


# linear algebra -------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """y = W x + b for x: [n], or row-wise Y = X W^T + b for X: [k x n]."""
    _rank('linear', weight, 2)
    _rank('linear', x, 1, 2)
    m, n = weight.shape
    if x.shape[-1] != n:
        raise DimensionError('linear', x.shape, weight.shape)
    if bias is not None and bias.shape != (m,):
        raise DimensionError('linear', bias.shape, (m,))

    out = x.values @ weight.values.T
    if bias is not None:
        out = out + bias.values
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g @ weight.values)
        if weight.requires_grad:
            if x.values.ndim == 1:
                weight.accumulate(np.outer(g, x.values))
            else:
                weight.accumulate(g.T @ x.values)
        if bias is not None and bias.requires_grad:
            bias.accumulate(g if g.ndim == 1 else g.sum(axis=0))
    return _make(out, parents, backward, 'linear')


def matvec(m: Tensor, v: Tensor) -> Tensor:
    """[k x n] @ [n] -> [k]."""
    _rank('matvec', m, 2)
    _rank('matvec', v, 1)
    if m.shape[1] != v.shape[0]:
        raise DimensionError('matvec', m.shape, v.shape)

    def backward(g):
        if m.requires_grad:
            m.accumulate(np.outer(g, v.values))
        if v.requires_grad:
            v.accumulate(m.values.T @ g)
    return _make(m.values @ v.values, (m, v), backward, 'matvec')


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate rank-1 tensors, or rank-2 tensors along rows (0) or columns (1)."""
    if not tensors:
        raise DomainError("concat: nothing to concatenate")
    ndim = tensors[0].values.ndim
    for t in tensors[1:]:
        if t.values.ndim != ndim:
            raise DimensionError('concat', tensors[0].shape, t.shape)
    if ndim == 1 and axis != 0:
        raise DimensionError('concat', tensors[0].shape, (axis,))
    try:
        out = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError('concat', tensors[0].shape, tensors[-1].shape)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                t.accumulate(g[lo:hi] if axis == 0 else g[:, lo:hi])
    return _make(out, tuple(tensors), backward, 'concat')


def add_row(m: Tensor, v: Tensor) -> Tensor:
    """Add a [d] vector to every row of a [k x d] matrix."""
    _rank('add_row', m, 2)
    _rank('add_row', v, 1)
    if m.shape[1] != v.shape[0]:
        raise DimensionError('add_row', m.shape, v.shape)

    def backward(g):
        if m.requires_grad:
            m.accumulate(g)
        if v.requires_grad:
            v.accumulate(g.sum(axis=0))
    return _make(m.values + v.values, (m, v), backward, 'add_row')


def scale_rows(m: Tensor, w: Tensor) -> Tensor:
    """Multiply row i of a [k x d] matrix by w[i]."""
    _rank('scale_rows', m, 2)
    _rank('scale_rows', w, 1)
    if m.shape[0] != w.shape[0]:
        raise DimensionError('scale_rows', m.shape, w.shape)

    def backward(g):
        if m.requires_grad:
            m.accumulate(g * w.values[:, None])
        if w.requires_grad:
            w.accumulate((g * m.values).sum(axis=1))
    return _make(m.values * w.values[:, None], (m, w), backward, 'scale_rows')


# indexing -------------------------------------------------------------------

def take(x: Tensor, index) -> Tensor:
    """Gather entries of a rank-1 tensor."""
    _rank('take', x, 1)
    idx = np.asarray(index, dtype=np.int64)

    def backward(g):
        full = np.zeros(x.shape)
        np.add.at(full, idx, g)
        x.accumulate(full)
    return _make(x.values[idx], (x,), backward, 'take')


def take_rows(m: Tensor, index) -> Tensor:
    """Gather rows of a [n x d] matrix."""
    _rank('take_rows', m, 2)
    idx = np.asarray(index, dtype=np.int64)

    def backward(g):
        full = np.zeros(m.shape)
        np.add.at(full, idx, g)
        m.accumulate(full)
    return _make(m.values[idx], (m,), backward, 'take_rows')


def scatter_rows_add(m: Tensor, index, num_rows: int) -> Tensor:
    """Sum the rows of a [k x d] matrix into ``num_rows`` buckets."""
    _rank('scatter_rows_add', m, 2)
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape[0] != m.shape[0]:
        raise DimensionError('scatter_rows_add', m.shape, idx.shape)
    out = np.zeros((num_rows, m.shape[1]))
    np.add.at(out, idx, m.values)

    def backward(g):
        m.accumulate(g[idx])
    return _make(out, (m,), backward, 'scatter_rows_add')


def segment_max(x: Tensor, segments, num_segments: int, fill: float = 0.0) -> Tensor:
    """Maximum of a rank-1 tensor within each segment.

    Empty segments take ``fill``. Ties send the gradient to the lowest position.
    """
    _rank('segment_max', x, 1)
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape != x.shape:
        raise DimensionError('segment_max', x.shape, seg.shape)
    out = np.full(num_segments, fill, dtype=np.float64)
    winner = np.full(num_segments, -1, dtype=np.int64)
    for pos in range(seg.shape[0]):
        s = seg[pos]
        if winner[s] < 0 or x.values[pos] > out[s]:
            out[s] = x.values[pos]
            winner[s] = pos

    def backward(g):
        full = np.zeros(x.shape)
        hit = winner >= 0
        np.add.at(full, winner[hit], g[hit])
        x.accumulate(full)
    return _make(out, (x,), backward, 'segment_max')


# normalizations and losses ----------------------------------------------------

def softmax(x: Tensor) -> Tensor:
    """Softmax over a non-empty set of scores, stabilized by max subtraction."""
    _rank('softmax', x, 1)
    if x.shape[0] == 0:
        raise DomainError("softmax: empty score set")
    shifted = np.exp(x.values - x.values.max())
    out = shifted / shifted.sum()

    def backward(g):
        x.accumulate(out * (g - float(g @ out)))
    return _make(out, (x,), backward, 'softmax')


def log_softmax(x: Tensor) -> Tensor:
    _rank('log_softmax', x, 1)
    if x.shape[0] == 0:
        raise DomainError("log_softmax: empty score set")
    shifted = x.values - x.values.max()
    lse = np.log(np.exp(shifted).sum())
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        x.accumulate(g - probs * g.sum())
    return _make(out, (x,), backward, 'log_softmax')


def segment_softmax(x: Tensor, segments, num_segments: int) -> Tensor:
    """Softmax computed independently inside each segment of a rank-1 tensor."""
    _rank('segment_softmax', x, 1)
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape != x.shape:
        raise DimensionError('segment_softmax', x.shape, seg.shape)
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, seg, x.values)
    shifted = np.exp(x.values - seg_max[seg])
    totals = np.zeros(num_segments)
    np.add.at(totals, seg, shifted)
    out = shifted / totals[seg]

    def backward(g):
        inner = np.zeros(num_segments)
        np.add.at(inner, seg, g * out)
        x.accumulate(out * (g - inner[seg]))
    return _make(out, (x,), backward, 'segment_softmax')


def logsumexp(x: Tensor) -> Tensor:
    _rank('logsumexp', x, 1)
    if x.shape[0] == 0:
        raise DomainError("logsumexp: empty set")
    top = x.values.max()
    weights = np.exp(x.values - top)
    total = weights.sum()

    def backward(g):
        x.accumulate(float(g) * weights / total)
    return _make(top + np.log(total), (x,), backward, 'logsumexp')


def binary_cross_entropy(p: Tensor, labels, reduction: str = 'mean') -> Tensor:
    """-[y log p + (1-y) log(1-p)] for probabilities strictly inside (0, 1)."""
    _rank('binary_cross_entropy', p, 1)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != p.shape:
        raise DimensionError('binary_cross_entropy', p.shape, y.shape)
    if p.shape[0] == 0:
        raise DomainError("binary_cross_entropy: empty input")
    q = p.values
    if np.any(q <= 0.0) or np.any(q >= 1.0):
        raise DomainError("binary_cross_entropy: probabilities must lie in (0, 1)")
    terms = -(y * np.log(q) + (1.0 - y) * np.log1p(-q))
    n = q.shape[0] if reduction == 'mean' else 1

    def backward(g):
        p.accumulate(float(g) * (q - y) / (q * (1.0 - q)) / n)
    return _make(terms.sum() / n, (p,), backward, 'binary_cross_entropy')


def cross_entropy_rows(logits: Tensor, targets) -> Tensor:
    """Mean categorical cross-entropy over the rows of a [n x C] logit matrix."""
    _rank('cross_entropy_rows', logits, 2)
    t = np.asarray(targets, dtype=np.int64)
    n, c = logits.shape
    if t.shape != (n,):
        raise DimensionError('cross_entropy_rows', logits.shape, t.shape)
    if n == 0:
        raise DomainError("cross_entropy_rows: empty batch")
    if np.any(t < 0) or np.any(t >= c):
        raise DomainError(f"cross_entropy_rows: targets outside [0, {c})")
    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    sums = expd.sum(axis=1)
    probs = expd / sums[:, None]
    rows = np.arange(n)
    loss = float(np.mean(np.log(sums) - shifted[rows, t]))

    def backward(g):
        grad = probs.copy()
        grad[rows, t] -= 1.0
        logits.accumulate(float(g) * grad / n)
    return _make(loss, (logits,), backward, 'cross_entropy_rows')
