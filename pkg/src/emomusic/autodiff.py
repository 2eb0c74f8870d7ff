"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough ops for the attribute-conditioned transformer: broadcasted
arithmetic, batched matmul, cumulative sums (the causal prefix sums of
linear attention), embedding gathers, layer norm, softmax, and a masked
cross-entropy head. Gradients are dense numpy arrays of the same dtype as
the forward data; the whole graph is freed once the output goes out of
scope.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward=None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def _accumulate(self, grad: np.ndarray, source: np.ndarray | None = None) -> None:
        if self.grad is None:
            # views of the child's grad (reshape/transpose/no-op broadcasts)
            # must be copied before anyone accumulates into them
            if source is not None and np.shares_memory(grad, source):
                grad = grad.copy()
            self.grad = grad
        else:
            self.grad += grad

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor (defaults to d(self)/d(self) = 1)."""
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))

        if grad is None:
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            for parent, parent_grad in zip(node._parents, node._backward(node.grad)):
                if parent.requires_grad and parent_grad is not None:
                    parent._accumulate(parent_grad, source=node.grad)

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, parents=(self, other),
                     backward=lambda g: (_unbroadcast(g, self.shape),
                                         _unbroadcast(g, other.shape)))
        return out

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, parents=(self,), backward=lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        return Tensor(self.data * other.data, parents=(self, other),
                      backward=lambda g: (_unbroadcast(g * other.data, self.shape),
                                          _unbroadcast(g * self.data, other.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out_data = self.data / other.data

        def backward(g):
            return (_unbroadcast(g / other.data, self.shape),
                    _unbroadcast(-g * out_data / other.data, other.shape))

        return Tensor(out_data, parents=(self, other), backward=backward)

    def __pow__(self, exponent: float):
        def backward(g):
            return (g * exponent * self.data ** (exponent - 1),)

        return Tensor(self.data ** exponent, parents=(self,), backward=backward)

    def __matmul__(self, other):
        other = as_tensor(other)

        def backward(g):
            ga = g @ np.swapaxes(other.data, -1, -2)
            gb = np.swapaxes(self.data, -1, -2) @ g
            return _unbroadcast(ga, self.shape), _unbroadcast(gb, other.shape)

        return Tensor(self.data @ other.data, parents=(self, other), backward=backward)

    def __getitem__(self, key):
        def backward(g):
            full = np.zeros_like(self.data)
            full[key] = g
            return (full,)

        return Tensor(self.data[key], parents=(self,), backward=backward)

    def sum(self, axis=None, keepdims: bool = False):
        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, self.shape).astype(self.data.dtype),)
            g_exp = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g_exp, self.shape).astype(self.data.dtype),)

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims),
                      parents=(self,), backward=backward)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def cumsum(self, axis: int):
        def backward(g):
            return (np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis),)

        return Tensor(np.cumsum(self.data, axis=axis), parents=(self,), backward=backward)

    def reshape(self, *shape):
        def backward(g):
            return (g.reshape(self.shape),)

        return Tensor(self.data.reshape(*shape), parents=(self,), backward=backward)

    def transpose(self, *axes):
        inverse = np.argsort(axes)

        def backward(g):
            return (g.transpose(*inverse),)

        return Tensor(self.data.transpose(*axes), parents=(self,), backward=backward)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def pad_axis(x: Tensor, axis: int, after: int) -> Tensor:
    """Zero-pad the end of one axis; backward slices the padding back off."""
    if after == 0:
        return x
    widths = [(0, 0)] * x.data.ndim
    widths[axis] = (0, after)
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(0, x.data.shape[axis])
    index = tuple(index)

    def backward(g):
        return (g[index],)

    return Tensor(np.pad(x.data, widths), parents=(x,), backward=backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0.0), parents=(x,),
                  backward=lambda g: (g * mask,))


def elu_plus_one(x: Tensor) -> Tensor:
    """phi(x) = elu(x) + 1: x+1 for x > 0, exp(x) otherwise. Always positive."""
    pos = x.data > 0
    out_data = np.where(pos, x.data + 1.0, np.exp(np.minimum(x.data, 0.0)))
    deriv = np.where(pos, 1.0, out_data)  # d/dx exp(x) = exp(x) on the left branch
    return Tensor(out_data, parents=(x,), backward=lambda g: (g * deriv,))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` (V, d) at integer ``ids`` (any shape)."""
    ids = np.asarray(ids)

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        return (full,)

    return Tensor(table.data[ids], parents=(table,), backward=backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    d = x.data.shape[-1]

    def backward(g):
        dxhat = g * gamma.data
        dx = inv / d * (d * dxhat
                        - dxhat.sum(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        axes = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return Tensor(xhat * gamma.data + beta.data, parents=(x, gamma, beta),
                  backward=backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor(y, parents=(x,), backward=backward)


def cross_entropy(logits: Tensor, targets: np.ndarray,
                  mask: np.ndarray | None = None) -> tuple[Tensor, int]:
    """Mean cross-entropy of ``logits`` (N, V) against integer ``targets`` (N,).

    Positions where ``mask`` is False are excluded. Returns (loss, number of
    positions counted); with zero counted positions the loss is exactly 0.
    """
    n, _ = logits.data.shape
    targets = np.asarray(targets)
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.data.max(axis=1)
    nll = lse - logits.data[np.arange(n), targets]
    loss_value = float((nll * mask).sum() / count) if count else 0.0

    def backward(g):
        if count == 0:
            return (np.zeros_like(logits.data),)
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), targets] -= 1.0
        return (g * p * (mask[:, None] / count),)

    loss = Tensor(np.asarray(loss_value, dtype=logits.data.dtype),
                  parents=(logits,), backward=backward)
    return loss, count


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when rate is 0 or rng is None (inference)."""
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(keep.astype(x.data.dtype))
