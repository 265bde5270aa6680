# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Dense tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active `Tape` when at least one
input requires a gradient; outside a tape they are plain numpy arithmetic.
A tape belongs to one forward/backward pass and is never shared between
threads (the active-tape stack is thread local).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import (
    Callable,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .exceptions import EmbeddingIndexError, MaskError, ShapeError, TapeError

GELU_COEFF = 0.044715
SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))

_default_dtype = np.float64


def set_default_dtype(dtype):
    """Select 64-bit (tests, gradient checks) or 32-bit (training) arithmetic."""
    global _default_dtype
    _default_dtype = np.dtype(dtype).type


def get_default_dtype():
    return _default_dtype


def precision_dtype(precision: int):
    if precision == 64:
        return np.float64
    if precision == 32:
        return np.float32
    raise ShapeError(f"unsupported precision: {precision}")


class Tensor:
    """An n-dimensional array that may take part in a gradient tape."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _default_dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        # set for tensors produced by a recorded operation
        self.tape: Optional[Tape] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.tape is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


TensorLike = Union[Tensor, np.ndarray, float, int]
Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class TapeEntry:
    name: str
    output: Tensor
    inputs: Tuple[Tensor, ...]
    backward: Backward


class _TapeStack(threading.local):
    def __init__(self):
        self.tapes: List[Tape] = []


_active = _TapeStack()


def current_tape() -> Optional[Tape]:
    return _active.tapes[-1] if _active.tapes else None


class Tape:
    """Ordered record of operations, replayed backwards by `backward`."""

    def __init__(self):
        self.entries: List[TapeEntry] = []

    def __enter__(self) -> Tape:
        _active.tapes.append(self)
        return self

    def __exit__(self, *exc):
        _active.tapes.remove(self)
        return False

    def __len__(self) -> int:
        return len(self.entries)

    def backward(self, loss: Tensor):
        pending = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            grad = pending.pop(id(entry.output), None)
            if grad is None:
                continue
            for tensor, input_grad in zip(entry.inputs, entry.backward(grad)):
                if input_grad is None or not tensor.requires_grad:
                    continue
                if tensor.is_leaf:
                    _accumulate(tensor, input_grad)
                elif id(tensor) in pending:
                    pending[id(tensor)] = pending[id(tensor)] + input_grad
                else:
                    pending[id(tensor)] = input_grad


def _accumulate(tensor: Tensor, grad: np.ndarray):
    grad = np.asarray(grad, dtype=tensor.data.dtype).reshape(tensor.shape)
    tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into `.grad` of every leaf requiring it."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise TapeError("loss is detached from every gradient tape")
    if loss.is_leaf:
        _accumulate(loss, np.ones_like(loss.data))
        return
    loss.tape.backward(loss)


def as_tensor(value: TensorLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(name: str, data, inputs: Tuple[Tensor, ...], grad_fn: Backward) -> Tensor:
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.tape = tape
        tape.entries.append(TapeEntry(name, out, inputs, grad_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}")


# Elementwise arithmetic


def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result("add", a.data + b.data, (a, b), grad_fn)


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result("sub", a.data - b.data, (a, b), grad_fn)


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def grad_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result("mul", a.data * b.data, (a, b), grad_fn)


def sigmoid(x: Tensor) -> Tensor:
    y = np.exp(-np.logaddexp(0.0, -x.data))

    def grad_fn(g):
        return (g * y * (1.0 - y),)

    return _result("sigmoid", y, (x,), grad_fn)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def grad_fn(g):
        return (g * (1.0 - y * y),)

    return _result("tanh", y, (x,), grad_fn)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    v = x.data
    t = np.tanh(SQRT_2_OVER_PI * (v + GELU_COEFF * v**3))
    y = 0.5 * v * (1.0 + t)

    def grad_fn(g):
        du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du),)

    return _result("gelu", y, (x,), grad_fn)


# Shape manipulation and reductions


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    original = x.shape
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {original} into {tuple(shape)}")

    def grad_fn(g):
        return (g.reshape(original),)

    return _result("reshape", y, (x,), grad_fn)


def sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result("sum", x.data.sum(axis=axis, keepdims=keepdims), (x,), grad_fn)


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def concat_last(tensors: Sequence[Tensor]) -> Tensor:
    tensors = tuple(tensors)
    leading = {t.shape[:-1] for t in tensors}
    if len(leading) != 1:
        raise ShapeError(f"cannot concatenate shapes {[t.shape for t in tensors]}")
    splits = np.cumsum([t.shape[-1] for t in tensors])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=-1))

    data = np.concatenate([t.data for t in tensors], axis=-1)
    return _result("concat_last", data, tensors, grad_fn)


# Products


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m×k and a k×n tensor."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return _result("matmul", a.data @ b.data, (a, b), grad_fn)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weightᵀ + bias`` over any number of leading dimensions.

    `weight` is stored as (out_features, in_features).
    """
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"cannot apply weight {weight.shape} to input {x.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"bias {bias.shape} does not match weight {weight.shape}")

    # each output row depends only on its input row, bit for bit
    y = np.einsum("...i,oi->...o", x.data, weight.data)
    if bias is not None:
        y = y + bias.data

    def grad_fn(g):
        flat_g = g.reshape(-1, g.shape[-1])
        flat_x = x.data.reshape(-1, x.shape[-1])
        grads = [g @ weight.data, flat_g.T @ flat_x]
        if bias is not None:
            grads.append(flat_g.sum(axis=0))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _result("linear", y, inputs, grad_fn)


def einsum(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand `numpy.einsum` with an explicit output (``"ij,jk->ik"``)."""
    try:
        inputs, out = subscripts.replace(" ", "").split("->")
        sub_a, sub_b = inputs.split(",")
    except ValueError:
        raise ShapeError(f"einsum needs two operands and an output: {subscripts!r}")
    for own, other in ((sub_a, sub_b), (sub_b, sub_a)):
        if any(c not in out and c not in other for c in own):
            raise ShapeError(f"unsupported einsum contraction: {subscripts!r}")

    try:
        y = np.einsum(subscripts, a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"einsum {subscripts!r} on {a.shape}, {b.shape}: {e}")

    def grad_fn(g):
        return (
            np.einsum(f"{out},{sub_b}->{sub_a}", g, b.data),
            np.einsum(f"{out},{sub_a}->{sub_b}", g, a.data),
        )

    return _result("einsum", y, (a, b), grad_fn)


# Indexing


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Rows of `x` selected by an integer array of any shape."""
    index = np.asarray(index, dtype=np.int64)

    def grad_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _result("gather_rows", x.data[index], (x,), grad_fn)


def embedding_lookup(table: Tensor, indices: np.ndarray) -> Tensor:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise EmbeddingIndexError(
            f"embedding index out of range for a table of {table.shape[0]} rows"
        )
    return gather_rows(table, indices)


def segment_sum(x: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of `x` that share a segment id."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    y = np.zeros((num_segments,) + x.shape[1:], dtype=x.data.dtype)
    np.add.at(y, segment_ids, x.data)

    def grad_fn(g):
        return (g[segment_ids],)

    return _result("segment_sum", y, (x,), grad_fn)


# Normalization


def softmax_rows(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax over the last axis; entries where `mask` is False get exactly 0."""
    if mask is None:
        keep = np.ones(x.shape, dtype=bool)
    else:
        try:
            keep = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        except ValueError:
            raise ShapeError(f"mask {np.shape(mask)} does not fit scores {x.shape}")
    if x.shape[-1] == 0 or not keep.any(axis=-1).all():
        raise MaskError("softmax row has no unmasked entries")

    scores = np.where(keep, x.data, -np.inf)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.where(keep, np.exp(shifted), 0.0)
    y = exp / exp.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result("softmax_rows", y, (x,), grad_fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization, eps inside the square root, then affine."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer norm parameters do not match width {d}")

    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    y = normed * gamma.data + beta.data

    def grad_fn(g):
        dnormed = g * gamma.data
        dx = (inv_std / d) * (
            d * dnormed
            - dnormed.sum(axis=-1, keepdims=True)
            - normed * (dnormed * normed).sum(axis=-1, keepdims=True)
        )
        flat = (-1, d)
        dgamma = (g * normed).reshape(flat).sum(axis=0)
        dbeta = g.reshape(flat).sum(axis=0)
        return dx, dgamma, dbeta

    return _result("layer_norm", y, (x, gamma, beta), grad_fn)


# Losses


def cross_entropy_logits(
    logits: Tensor,
    targets: np.ndarray,
    weight: Optional[np.ndarray] = None,
    kind: Optional[str] = None,
) -> Tensor:
    """Mean cross-entropy computed from logits in log-sum-exp form.

    ``kind="binary"``: `targets` has the shape of `logits` and holds 0/1;
    ``p = sigmoid(logit)``.  ``kind="categorical"``: `targets` holds class ids
    with the shape of ``logits.shape[:-1]``.  Without `kind` the target shape
    decides.  `weight` (binary only) zeroes out entries such as missing labels.
    """
    targets = np.asarray(targets)
    if kind is None:
        if targets.shape == logits.shape:
            kind = "binary"
        elif targets.shape == logits.shape[:-1]:
            kind = "categorical"
    if kind == "binary" and targets.shape == logits.shape:
        return _binary_cross_entropy(logits, targets, weight)
    if kind == "categorical" and targets.shape == logits.shape[:-1]:
        return _categorical_cross_entropy(logits, targets)
    raise ShapeError(f"targets {targets.shape} do not fit logits {logits.shape}")


def _binary_cross_entropy(
    logits: Tensor, targets: np.ndarray, weight: Optional[np.ndarray]
) -> Tensor:
    z = logits.data
    y = targets.astype(z.dtype)
    w = np.ones_like(z) if weight is None else np.asarray(weight, dtype=z.dtype)
    total = w.sum()
    if total <= 0:
        raise ShapeError("binary cross-entropy has no weighted entries")
    losses = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    value = (w * losses).sum() / total

    def grad_fn(g):
        p = np.exp(-np.logaddexp(0.0, -z))
        return (g * w * (p - y) / total,)

    return _result("binary_cross_entropy", value, (logits,), grad_fn)


def _categorical_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    z = logits.data
    classes = z.shape[-1]
    ids = targets.astype(np.int64)
    if ids.size == 0:
        raise ShapeError("categorical cross-entropy over zero rows")
    if ids.min() < 0 or ids.max() >= classes:
        raise EmbeddingIndexError(f"class id outside [0, {classes})")

    shifted = z - z.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_p = shifted - log_norm
    picked = np.take_along_axis(log_p, ids[..., None], axis=-1)
    value = -picked.mean()

    def grad_fn(g):
        grad = np.exp(log_p)
        np.put_along_axis(
            grad, ids[..., None], np.take_along_axis(grad, ids[..., None], -1) - 1.0, -1
        )
        return (g * grad / ids.size,)

    return _result("categorical_cross_entropy", value, (logits,), grad_fn)


def mse_loss(
    predictions: Tensor, targets: np.ndarray, weight: Optional[np.ndarray] = None
) -> Tensor:
    """Weighted mean squared error."""
    p = predictions.data
    y = np.asarray(targets, dtype=p.dtype)
    if y.shape != p.shape:
        raise ShapeError(f"targets {y.shape} do not fit predictions {p.shape}")
    w = np.ones_like(p) if weight is None else np.asarray(weight, dtype=p.dtype)
    total = w.sum()
    if total <= 0:
        raise ShapeError("squared error has no weighted entries")
    diff = p - y

    def grad_fn(g):
        return (g * 2.0 * w * diff / total,)

    return _result("mse", (w * diff * diff).sum() / total, (predictions,), grad_fn)
