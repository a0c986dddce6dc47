"""Reverse-mode differentiation over numpy arrays on an explicit tape.

A :class:`Tape` is an append-only record of primitive operations (add,
multiply, matmul, tanh, indexing, reductions, ...) whose nodes reference
their parents, so parents always precede children and a single reverse
sweep accumulates the gradient of any recorded scalar with respect to any
recorded leaf.  Only gradients with respect to leaves are supported; input
derivatives of the network are produced by closed-form recursions built
from these same primitives, which is what makes them differentiable in the
leaves again.

Nodes hold float64 arrays and support the arithmetic operators plus the
module-level helpers :func:`tanh`, :func:`matmul`, :func:`transpose`,
:func:`reshape`, :func:`nsum` and :func:`nmean`.  Every helper also accepts
plain numpy arrays and then simply computes with numpy, so the same
numerical code can run taped or untaped.
"""

from __future__ import annotations

import numpy as np


class Tape:
    """Append-only operation record enabling one reverse sweep."""

    def __init__(self):
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    def _append(self, node):
        node._index = len(self._nodes)
        self._nodes.append(node)

    def constant(self, value):
        """Record a leaf that no gradient flows into."""
        return Node(self, value, requires_grad=False)

    def variable(self, value):
        """Record a leaf whose gradient the reverse sweep reports."""
        return Node(self, value, requires_grad=True)

    def gradients(self, output, leaves):
        """Gradient of scalar ``output`` with respect to each leaf node.

        Visits every node at most once, accumulating adjoints in reverse
        recording order.  Leaves that the output does not depend on get a
        zero gradient of their shape.
        """
        if not isinstance(output, Node) or output._tape is not self:
            raise ValueError("output node does not belong to this tape")
        for leaf in leaves:
            if leaf._tape is not self:
                raise ValueError("a requested leaf does not belong to this tape")
        if np.size(output.value) != 1:
            raise ValueError("gradients are defined for scalar outputs only")

        adjoint = {output._index: np.ones_like(np.asarray(output.value))}
        wanted = {leaf._index for leaf in leaves}
        found = {}
        for node in reversed(self._nodes[: output._index + 1]):
            grad = adjoint.pop(node._index, None)
            if grad is None:
                continue
            if node._index in wanted:
                found[node._index] = grad
            for parent, vjp in zip(node._parents, node._vjps):
                if not parent.requires_grad:
                    continue
                contribution = vjp(grad)
                if parent._index in adjoint:
                    adjoint[parent._index] = adjoint[parent._index] + contribution
                else:
                    adjoint[parent._index] = contribution
        return [found.get(leaf._index, np.zeros_like(leaf.value)) for leaf in leaves]


class Node:
    """One recorded value; arithmetic on nodes records further operations."""

    __slots__ = ("_tape", "value", "requires_grad", "_parents", "_vjps", "_index")
    __array_priority__ = 100  # keep numpy from absorbing `ndarray op Node`

    def __init__(self, tape, value, requires_grad, parents=(), vjps=()):
        self._tape = tape
        self.value = np.asarray(value, dtype=float)
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._vjps = vjps
        tape._append(self)

    @property
    def shape(self):
        return self.value.shape

    def _lift(self, other):
        if isinstance(other, Node):
            if other._tape is not self._tape:
                raise ValueError("cannot combine nodes from different tapes")
            return other
        return self._tape.constant(other)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = self._lift(other)
        return _binary(self, other, self.value + other.value,
                       lambda g: _unbroadcast(g, self.shape),
                       lambda g: _unbroadcast(g, other.shape))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        return _binary(self, other, self.value - other.value,
                       lambda g: _unbroadcast(g, self.shape),
                       lambda g: _unbroadcast(-g, other.shape))

    def __rsub__(self, other):
        return self._lift(other).__sub__(self)

    def __mul__(self, other):
        other = self._lift(other)
        return _binary(self, other, self.value * other.value,
                       lambda g: _unbroadcast(g * other.value, self.shape),
                       lambda g: _unbroadcast(g * self.value, other.shape))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        return _binary(self, other, self.value / other.value,
                       lambda g: _unbroadcast(g / other.value, self.shape),
                       lambda g: _unbroadcast(-g * self.value / (other.value * other.value),
                                              other.shape))

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __neg__(self):
        return Node(self._tape, -self.value, self.requires_grad,
                    parents=(self,), vjps=(lambda g: -g,))

    def __pow__(self, exponent):
        if isinstance(exponent, Node):
            raise TypeError("only constant exponents are supported")
        p = float(exponent)
        value = self.value ** p
        base = self.value
        return Node(self._tape, value, self.requires_grad, parents=(self,),
                    vjps=(lambda g: g * p * base ** (p - 1.0),))

    def __getitem__(self, key):
        value = self.value[key]
        shape = self.value.shape

        def vjp(g):
            out = np.zeros(shape)
            out[key] = g
            return out

        return Node(self._tape, value, self.requires_grad,
                    parents=(self,), vjps=(vjp,))

    def item(self):
        return float(self.value)


def _binary(a, b, value, vjp_a, vjp_b):
    return Node(a._tape, value, a.requires_grad or b.requires_grad,
                parents=(a, b), vjps=(vjp_a, vjp_b))


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- helpers usable on nodes and plain arrays alike --------------------------

def tanh(x):
    if isinstance(x, Node):
        y = np.tanh(x.value)
        return Node(x._tape, y, x.requires_grad, parents=(x,),
                    vjps=(lambda g: g * (1.0 - y * y),))
    return np.tanh(x)


def matmul(a, b):
    """Matrix product with numpy broadcasting over leading axes."""
    if not isinstance(a, Node) and not isinstance(b, Node):
        return np.matmul(a, b)
    if isinstance(a, Node):
        tape = a._tape
        b = b if isinstance(b, Node) else tape.constant(b)
    else:
        tape = b._tape
        a = tape.constant(a)
    if a._tape is not b._tape:
        raise ValueError("cannot combine nodes from different tapes")
    av, bv = a.value, b.value
    value = np.matmul(av, bv)

    def vjp_a(g):
        return _unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), a.shape)

    def vjp_b(g):
        return _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), b.shape)

    return Node(tape, value, a.requires_grad or b.requires_grad,
                parents=(a, b), vjps=(vjp_a, vjp_b))


def transpose(x):
    """Swap the last two axes."""
    if isinstance(x, Node):
        return Node(x._tape, np.swapaxes(x.value, -1, -2), x.requires_grad,
                    parents=(x,), vjps=(lambda g: np.swapaxes(g, -1, -2),))
    return np.swapaxes(x, -1, -2)


def reshape(x, shape):
    if isinstance(x, Node):
        old = x.value.shape
        return Node(x._tape, x.value.reshape(shape), x.requires_grad,
                    parents=(x,), vjps=(lambda g: g.reshape(old),))
    return np.reshape(x, shape)


def nsum(x, axis=None):
    if isinstance(x, Node):
        value = x.value.sum(axis=axis)
        shape = x.value.shape

        def vjp(g):
            if axis is None:
                return np.broadcast_to(g, shape).copy()
            g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape).copy()

        return Node(x._tape, value, x.requires_grad, parents=(x,), vjps=(vjp,))
    return np.sum(x, axis=axis)


def nmean(x, axis=None):
    if isinstance(x, Node):
        count = x.value.size if axis is None else x.value.shape[axis]
        return nsum(x, axis=axis) / float(count)
    return np.mean(x, axis=axis)
