"""Dense float64 tensors with tape-based reverse-mode differentiation.

Deliberately small: just the primitives needed to express the graph encoder,
the LSTM context tracker, the portrait attention, and the gated walker cells,
plus the two classification losses and a decoupled-weight-decay Adam step.
Everything is float64 and bit-deterministic for a fixed seed.
"""
from __future__ import annotations

import json
import math
import os
from typing import Callable, Iterable, Sequence

import numpy as np

LOSS_EPS = 1e-7  # probability clamp inside the losses, keeps log() finite

CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class UsageError(RuntimeError):
    """Autodiff API misuse, e.g. backward() without a recorded computation."""


class ValidationError(ValueError):
    """Loss inputs outside their documented domain."""


class Tensor:
    """A dense float64 array plus the tape hooks used for backprop.

    Interior nodes record their parents and a closure that routes the incoming
    gradient; leaves either carry ``requires_grad`` (trainable parameters) or
    are constants that the tape ignores.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple["Tensor", ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- conveniences ------------------------------------------------------

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
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def tracked(self) -> bool:
        return self.requires_grad or self._backward is not None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"<Tensor shape={self.shape}{tag}>"

    # -- operator sugar ----------------------------------------------------

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    # -- backward ----------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode sweep seeding d(self)/d(self) = 1.

        Raises UsageError when called on a tensor with no recorded trace or
        on a non-scalar.
        """
        if self.size != 1:
            raise UsageError(f"backward() needs a scalar, got shape {self.shape}")
        if self._backward is None:
            raise UsageError("backward() called before any recorded forward op")
        order = topological_trace(self)
        self.accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def topological_trace(root: Tensor) -> list[Tensor]:
    """Tape order: every tracked node reachable from ``root``, parents first.

    The reverse of this list is the order backward() visits nodes, each
    exactly once.
    """
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    seen.add(id(root))
    while stack:
        node, i = stack.pop()
        parents = [p for p in node._parents if p.tracked()]
        if i < len(parents):
            stack.append((node, i + 1))
            p = parents[i]
            if id(p) not in seen:
                seen.add(id(p))
                stack.append((p, 0))
        else:
            order.append(node)
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor],
          backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    if any(p.tracked() for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def bwd(g):
        if a.tracked():
            a.accumulate(_unbroadcast(g, a.shape))
        if b.tracked():
            b.accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def bwd(g):
        if a.tracked():
            a.accumulate(_unbroadcast(g, a.shape))
        if b.tracked():
            b.accumulate(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def bwd(g):
        if a.tracked():
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.tracked():
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bwd)


def scale(x, c: float) -> Tensor:
    """Multiply by a python constant (no gradient through ``c``)."""
    x = as_tensor(x)
    c = float(c)

    def bwd(g):
        if x.tracked():
            x.accumulate(g * c)

    return _make(x.data * c, (x,), bwd)


def matmul(a, b) -> Tensor:
    """Matrix/vector product following numpy ``@`` for 1-D/2-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != (b.shape[0] if b.ndim >= 1 else None):
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def bwd(g):
        if a.ndim == 2 and b.ndim == 2:
            ga, gb = g @ b.data.T, a.data.T @ g
        elif a.ndim == 2 and b.ndim == 1:
            ga, gb = np.outer(g, b.data), a.data.T @ g
        elif a.ndim == 1 and b.ndim == 2:
            ga, gb = b.data @ g, np.outer(a.data, g)
        else:  # 1-D @ 1-D
            ga, gb = g * b.data, g * a.data
        if a.tracked():
            a.accumulate(ga)
        if b.tracked():
            b.accumulate(gb)

    return _make(data, (a, b), bwd)


def dot(a, b) -> Tensor:
    """Inner product of two vectors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot needs equal-length vectors, got {a.shape} and {b.shape}")

    def bwd(g):
        if a.tracked():
            a.accumulate(g * b.data)
        if b.tracked():
            b.accumulate(g * a.data)

    return _make(a.data @ b.data, (a, b), bwd)


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.tracked():
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p.accumulate(g[tuple(sl)])

    return _make(data, parts, bwd)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    e = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def bwd(g):
        if x.tracked():
            x.accumulate(g * y * (1.0 - y))

    return _make(y, (x,), bwd)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def bwd(g):
        if x.tracked():
            x.accumulate(g * (1.0 - y * y))

    return _make(y, (x,), bwd)


def relu(x) -> Tensor:
    x = as_tensor(x)

    def bwd(g):
        if x.tracked():
            x.accumulate(g * (x.data > 0))

    return _make(np.maximum(x.data, 0.0), (x,), bwd)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        if x.tracked():
            inner = (g * y).sum(axis=axis, keepdims=True)
            x.accumulate(y * (g - inner))

    return _make(y, (x,), bwd)


def tsum(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    data = x.data.sum(axis=axis)

    def bwd(g):
        if x.tracked():
            if axis is None:
                x.accumulate(np.full_like(x.data, float(g)))
            else:
                x.accumulate(np.broadcast_to(np.expand_dims(g, axis), x.shape).copy())

    return _make(data, (x,), bwd)


def mean(x) -> Tensor:
    x = as_tensor(x)
    return scale(tsum(x), 1.0 / x.size)


def gather_rows(x, index) -> Tensor:
    """Select rows of a matrix (or entries of a vector) by integer index."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)

    def bwd(g):
        if x.tracked():
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            x.accumulate(gx)

    return _make(x.data[idx], (x,), bwd)


def segment_sum(x, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of ``x`` into ``num_segments`` buckets given per-row ids."""
    x = as_tensor(x)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape[0] != x.shape[0]:
        raise ShapeError(f"segment_sum: {seg.shape[0]} ids for {x.shape[0]} rows")
    out_shape = (num_segments,) + x.shape[1:]
    data = np.zeros(out_shape, dtype=np.float64)
    np.add.at(data, seg, x.data)

    def bwd(g):
        if x.tracked():
            x.accumulate(g[seg])

    return _make(data, (x,), bwd)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def binary_cross_entropy(pred: Tensor, labels, reduction: str = "sum") -> Tensor:
    """Logistic-regression loss, predictions clamped to [eps, 1-eps].

    ``labels`` is a constant 0/1 array broadcastable to ``pred``.
    """
    pred = as_tensor(pred)
    lab = np.asarray(labels, dtype=np.float64)
    if not np.all((lab == 0.0) | (lab == 1.0)):
        raise ValidationError("binary_cross_entropy labels must be 0 or 1")
    if lab.shape != pred.shape:
        try:
            lab = np.broadcast_to(lab, pred.shape)
        except ValueError:
            raise ShapeError(f"labels shape {lab.shape} vs predictions {pred.shape}")
    p = np.clip(pred.data, LOSS_EPS, 1.0 - LOSS_EPS)
    per = -(lab * np.log(p) + (1.0 - lab) * np.log(1.0 - p))
    if reduction == "sum":
        value = per.sum()
    elif reduction == "mean":
        value = per.mean()
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    inside = (pred.data > LOSS_EPS) & (pred.data < 1.0 - LOSS_EPS)

    def bwd(g):
        if pred.tracked():
            grad = (p - lab) / (p * (1.0 - p)) * inside
            if reduction == "mean":
                grad = grad / pred.size
            pred.accumulate(float(g) * grad)

    return _make(np.asarray(value), (pred,), bwd)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Negative log-softmax of the target class; ``logits`` is a vector."""
    logits = as_tensor(logits)
    if logits.ndim != 1:
        raise ShapeError(f"cross_entropy expects a logit vector, got {logits.shape}")
    target = int(target)
    if not 0 <= target < logits.shape[0]:
        raise ValidationError(f"class index {target} out of range for {logits.shape[0]} classes")
    m = logits.data.max()
    lse = m + math.log(np.exp(logits.data - m).sum())
    value = lse - logits.data[target]

    def bwd(g):
        if logits.tracked():
            sm = np.exp(logits.data - lse)
            sm[target] -= 1.0
            logits.accumulate(float(g) * sm)

    return _make(np.asarray(value), (logits,), bwd)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class AdamW:
    """Adam with decoupled weight decay applied directly to the parameters."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 1e-2):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * (p.grad * p.grad)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= self.lr * update
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data


# ---------------------------------------------------------------------------
# initialization and checkpoint IO
# ---------------------------------------------------------------------------

def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int | None = None) -> np.ndarray:
    """U(-1/sqrt(d), 1/sqrt(d)) with d the trailing (input) dimension."""
    fan = fan_in if fan_in is not None else shape[-1]
    bound = 1.0 / math.sqrt(max(fan, 1))
    return rng.uniform(-bound, bound, size=shape)


def save_params(path, params: dict[str, Tensor], meta: dict | None = None) -> None:
    """Write a versioned JSON checkpoint; byte-stable across save/load cycles."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "params": {
            name: {"shape": list(t.shape), "values": t.data.reshape(-1).tolist()}
            for name, t in params.items()
        },
    }
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {version!r}")
    arrays = {}
    for name, entry in doc["params"].items():
        arr = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        arrays[name] = arr
    return arrays, doc.get("meta", {})
