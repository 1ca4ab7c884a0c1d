"""Dense float64 tensors with reverse-mode gradients.

Deliberately small: only the operations the skeleton models need. Every
differentiable op records a backward closure on a tape; ``Tensor.backward``
replays the tape in reverse topological order and accumulates into ``.grad``,
so parameters shared across time steps (or across samples in a batch) sum
their contributions. All storage is float64; gradient checking against
central differences is the correctness oracle for every op here.
"""

import contextlib

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not fit the requested operation."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _sum_to(g, shape):
    """Reduce a broadcast gradient back down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tensor:
    """A float64 array plus an optional entry on the gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def __repr__(self):
        head = "Parameter" if isinstance(self, Parameter) else "Tensor"
        tag = f" name={self.name!r}" if self.name else ""
        return f"<{head} shape={self.shape}{tag}>"

    # -- gradient plumbing --------------------------------------------------

    def zero_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad[...] = 0.0

    def accumulate_grad(self, g):
        """Add a gradient contribution (reducing away broadcast axes)."""
        if not self.requires_grad:
            return
        if g.shape != self.data.shape:
            g = _sum_to(g, self.data.shape)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Run the tape from this scalar; gradients accumulate into leaves."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        # Iterative post-order: reversed, it is a topological order, so every
        # node's consumers fire before the node itself.
        order = []
        seen = {id(self)}
        stack = [(self, 0)]
        while stack:
            node, i = stack[-1]
            if i < len(node._parents):
                stack[-1] = (node, i + 1)
                p = node._parents[i]
                if id(p) not in seen:
                    seen.add(id(p))
                    stack.append((p, 0))
            else:
                order.append(node)
                stack.pop()
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _wrap(other)
        out = _op(self.data + other.data, (self, other))
        if out._parents:
            def bwd(g):
                self.accumulate_grad(g)
                other.accumulate_grad(g)
            out._backward = bwd
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = _wrap(other)
        out = _op(self.data - other.data, (self, other))
        if out._parents:
            def bwd(g):
                self.accumulate_grad(g)
                other.accumulate_grad(-g)
            out._backward = bwd
        return out

    def __rsub__(self, other):
        return _wrap(other) - self

    def __mul__(self, other):
        """Hadamard (or broadcast/scalar) product."""
        other = _wrap(other)
        a, b = self.data, other.data
        out = _op(a * b, (self, other))
        if out._parents:
            def bwd(g):
                self.accumulate_grad(g * b)
                other.accumulate_grad(g * a)
            out._backward = bwd
        return out

    __rmul__ = __mul__

    def __neg__(self):
        out = _op(-self.data, (self,))
        if out._parents:
            out._backward = lambda g: self.accumulate_grad(-g)
        return out

    def __matmul__(self, other):
        return matmul(self, other)

    # -- activations --------------------------------------------------------

    def sigmoid(self):
        x = self.data
        # branch keeps exp() off large positive arguments
        y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        out = _op(y, (self,))
        if out._parents:
            out._backward = lambda g: self.accumulate_grad(g * y * (1.0 - y))
        return out

    def tanh(self):
        y = np.tanh(self.data)
        out = _op(y, (self,))
        if out._parents:
            out._backward = lambda g: self.accumulate_grad(g * (1.0 - y * y))
        return out

    def relu(self):
        mask = self.data > 0
        out = _op(np.where(mask, self.data, 0.0), (self,))
        if out._parents:
            out._backward = lambda g: self.accumulate_grad(g * mask)
        return out

    # -- reductions / reshaping ---------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = _op(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out._parents:
            shape = self.data.shape

            def bwd(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self.accumulate_grad(np.broadcast_to(g, shape).copy())
            out._backward = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        out = _op(self.data.reshape(shape), (self,))
        if out._parents:
            orig = self.data.shape
            out._backward = lambda g: self.accumulate_grad(g.reshape(orig))
        return out

    def slice_cols(self, lo, hi):
        """Columns [lo, hi) of a 2-D tensor."""
        if self.ndim != 2:
            raise ShapeError(f"slice_cols needs a 2-D tensor, got shape {self.shape}")
        out = _op(self.data[:, lo:hi].copy(), (self,))
        if out._parents:
            def bwd(g):
                full = np.zeros_like(self.data)
                full[:, lo:hi] = g
                self.accumulate_grad(full)
            out._backward = bwd
        return out


class Parameter(Tensor):
    """A named leaf tensor whose gradient persists between backward passes."""

    def __init__(self, data, name):
        super().__init__(data, requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _op(data, parents):
    """Build an op-result tensor, recording parents only when taping."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
    return out


def custom_op(data, parents, backward):
    """Result tensor with a caller-supplied backward closure.

    `backward(g)` must push contributions into each parent via
    ``accumulate_grad``. Used for fused operations (e.g. graph convolution).
    """
    out = _op(data, parents)
    if out._parents:
        out._backward = backward
    return out


# -- free functions ----------------------------------------------------------


def matmul(a, b):
    """2-D matrix product; grads are g @ b^T and a^T @ g."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = _op(a.data @ b.data, (a, b))
    if out._parents:
        def bwd(g):
            a.accumulate_grad(g @ b.data.T)
            b.accumulate_grad(a.data.T @ g)
        out._backward = bwd
    return out


def concat(tensors, axis):
    """Concatenate along `axis`; backward splits the gradient back."""
    tensors = [_wrap(t) for t in tensors]
    out = _op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out._parents:
        sizes = [t.data.shape[axis] for t in tensors]

        def bwd(g):
            off = 0
            for t, n in zip(tensors, sizes):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(off, off + n)
                t.accumulate_grad(g[tuple(sl)])
                off += n
        out._backward = bwd
    return out


def softmax_rows(x):
    """Row-wise softmax with max subtraction; rows sum to 1."""
    x = _wrap(x)
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows needs a 2-D tensor, got shape {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    out = _op(y, (x,))
    if out._parents:
        # dL/dx = y * (g - sum(g*y, row))
        def bwd(g):
            x.accumulate_grad(y * (g - (g * y).sum(axis=1, keepdims=True)))
        out._backward = bwd
    return out


def log_softmax_rows(x):
    """Row-wise log-softmax (stable form used by the cross-entropy terms)."""
    x = _wrap(x)
    if x.ndim != 2:
        raise ShapeError(f"log_softmax_rows needs a 2-D tensor, got shape {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = _op(z - lse, (x,))
    if out._parents:
        p = np.exp(z - lse)

        def bwd(g):
            x.accumulate_grad(g - p * g.sum(axis=1, keepdims=True))
        out._backward = bwd
    return out


def dropout(x, p, training, rng=None):
    """Inverted dropout: scale survivors by 1/(1-p) at train time, identity in eval."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    x = _wrap(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    out = _op(x.data * mask, (x,))
    if out._parents:
        out._backward = lambda g: x.accumulate_grad(g * mask)
    return out


def zero_grads(params):
    for p in params:
        p.zero_grad()
