"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is built eagerly: every op returns a new Tensor holding references
to its parents and one vector-Jacobian-product closure per differentiable
parent. backward() walks reachable nodes in reverse creation order, so the
traversal is a valid topological order by construction. Gradients accumulate
into leaf .grad buffers and are never cleared implicitly; calling backward
twice on the same loss doubles the leaf gradients.

Everything is serial and deterministic: identical inputs give bit-identical
outputs and gradients.
"""

from __future__ import annotations

import itertools
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ArgumentError, ContractError, DimensionError

_SEQ = itertools.count()

# Layer-norm groups with variance below this are emitted as exactly zero
# (pre-affine) instead of dividing by a vanishing sigma.
LAYER_NORM_VAR_FLOOR = 1e-12


class Tensor:
    """A dense float64 array plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjps", "_op", "_seq")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjps: tuple[Optional[Callable], ...] = ()
        self._op = "leaf"
        self._seq = next(_SEQ)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # Operator sugar; constants are lifted to non-differentiable tensors.
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return add(self, scale(_lift(other), -1.0))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape if len(shape) != 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes if axes else None)

    @property
    def T(self) -> "Tensor":
        return transpose(self, None)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, op: str, parents: Sequence[Tensor],
          vjps: Sequence[Optional[Callable]]) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjps = tuple(v if p.requires_grad else None for p, v in zip(parents, vjps))
    out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape`, inverting numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad leaf reachable from a scalar loss."""
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    # Reachable differentiable subgraph, then reverse creation order.
    seen: dict[int, Tensor] = {id(loss): loss}
    stack = [loss]
    while stack:
        node = stack.pop()
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                seen[id(p)] = p
                stack.append(p)
    order = sorted(seen.values(), key=lambda t: t._seq, reverse=True)

    # Stored gradient arrays may alias op outputs or each other (identity
    # vjps return their input), so accumulation never mutates in place.
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in order:
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad = node.grad + g
            continue
        for parent, vjp in zip(node._parents, node._vjps):
            if vjp is None:
                continue
            pg = vjp(g)
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg


# ---------------------------------------------------------------------------
# elementwise / arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    return _node(data, "add", (a, b), (
        lambda g: _unbroadcast(g, a.shape),
        lambda g: _unbroadcast(g, b.shape),
    ))


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    return _node(data, "mul", (a, b), (
        lambda g: _unbroadcast(g * b.data, a.shape),
        lambda g: _unbroadcast(g * a.data, b.shape),
    ))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _node(a.data * s, "scale", (a,), (lambda g: g * s,))


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0
    return _node(np.where(keep, a.data, 0.0), "relu", (a,), (lambda g: g * keep,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)
    return _node(data, "matmul", (a, b), (
        lambda g: _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape),
        lambda g: _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape),
    ))


# ---------------------------------------------------------------------------
# shape ops


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return _node(a.data.reshape(shape), "reshape", (a,),
                 (lambda g: g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _node(a.data.transpose(axes), "transpose", (a,),
                 (lambda g: g.transpose(inv),))


def extract(a: Tensor, sizes: Sequence[int]) -> Tensor:
    """Leading-corner slice: first sizes[i] entries along every axis.

    This is the weight-extraction primitive: first rows / first columns of a
    supernet matrix, first entries of a bias or norm vector. The gradient
    zero-pads back into the full tensor.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != a.ndim:
        raise DimensionError(f"extract sizes {sizes} do not match tensor rank {a.shape}")
    for s, full in zip(sizes, a.shape):
        if not (1 <= s <= full):
            raise DimensionError(f"extract sizes {sizes} out of range for shape {a.shape}")
    idx = tuple(slice(0, s) for s in sizes)

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return full

    return _node(a.data[idx].copy(), "extract", (a,), (vjp,))


# ---------------------------------------------------------------------------
# reductions and fused neural-net ops


def tsum(a: Tensor) -> Tensor:
    return _node(np.asarray(a.data.sum()), "sum", (a,),
                 (lambda g: np.broadcast_to(g, a.shape).astype(np.float64),))


def mean(a: Tensor) -> Tensor:
    if a.data.size == 0:
        raise ArgumentError("mean of an empty tensor")
    n = a.data.size
    return _node(np.asarray(a.data.mean()), "mean", (a,),
                 (lambda g: np.broadcast_to(g / n, a.shape).astype(np.float64),))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    if a.data.size == 0:
        raise ArgumentError("softmax of an empty tensor")
    if not (-a.ndim <= axis < a.ndim):
        raise ArgumentError(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return y * (g - dot)

    return _node(y, "softmax", (a,), (vjp,))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Normalize over the last axis, then apply an elementwise affine.

    Degenerate groups (variance < LAYER_NORM_VAR_FLOOR) normalize to exactly
    zero rather than dividing by a vanishing sigma; their x-gradient is zero.
    """
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match feature dim {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = np.where(var < LAYER_NORM_VAR_FLOOR, 0.0, 1.0 / np.sqrt(np.maximum(var, LAYER_NORM_VAR_FLOOR)))
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def vjp_x(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv * (dxhat - m1 - xhat * m2)

    def vjp_gain(g):
        return (g * xhat).reshape(-1, d).sum(axis=0)

    def vjp_bias(g):
        return g.reshape(-1, d).sum(axis=0)

    return _node(out, "layer_norm", (x, gain, bias), (vjp_x, vjp_gain, vjp_bias))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise DimensionError(f"embedding table must be 2-d, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ArgumentError(
            f"token id out of range [0, {table.shape[0]}) in embedding lookup")
    d = table.shape[1]

    def vjp(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.ravel(), g.reshape(-1, d))
        return full

    return _node(table.data[ids], "embedding", (table,), (vjp,))


def cross_entropy_with_logits(logits: Tensor, targets: np.ndarray,
                              mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean negative log-likelihood over the masked positions.

    logits: (..., V); targets: integer array of shape logits.shape[:-1];
    mask: boolean array over the same positions (default: all positions).
    """
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise DimensionError(
            f"targets shape {targets.shape} does not match logits {logits.shape}")
    if mask is None:
        mask = np.ones(targets.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != targets.shape:
        raise DimensionError(f"mask shape {mask.shape} does not match targets {targets.shape}")
    n_pred = int(mask.sum())
    if n_pred == 0:
        raise ArgumentError("cross entropy over zero predicted positions")
    v = logits.shape[-1]
    safe_targets = np.where(mask, targets, 0)
    if safe_targets.min() < 0 or safe_targets.max() >= v:
        raise ArgumentError(f"target id out of range [0, {v})")

    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    picked = np.take_along_axis(logp, safe_targets[..., None], axis=-1)[..., 0]
    loss = -(picked * mask).sum() / n_pred

    def vjp(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, safe_targets[..., None], 1.0, axis=-1)
        return g * (p - onehot) * mask[..., None] / n_pred

    return _node(np.asarray(loss), "cross_entropy", (logits,), (vjp,))
