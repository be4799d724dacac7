"""Taped array arithmetic and second-order input jets.

Every array produced during a training iteration is a :class:`Var` recorded
on a :class:`Tape`.  ``Tape.backward`` walks the tape in reverse and returns
gradients for the leaves registered as parameter slots.

A :class:`Jet` carries, for a batch of N points and a layer of width m,

* ``val``: the layer values, shape (N, m)
* ``der``: the input derivatives, shape (d + P, N, m); the first d channels
  are the gradient and the remaining P channels Hessian entries (i, j),
  i <= j.  By default all d(d+1)/2 upper-triangle pairs are carried in the
  order (0,0), (0,1), ..., (1,1), ...; a caller that only needs some of them
  (a Laplacian, say) may pass a subset, since each Hessian entry depends only
  on itself and the gradient.

Both parts are Vars, so parameter gradients flow through derivative
propagation as well as through values.
"""
from __future__ import annotations

import numpy as np


class NumericDomainError(ArithmeticError):
    """Raised when a taped operation leaves its mathematical domain."""

    def __init__(self, message, node_id=None):
        super().__init__(message if node_id is None else f"{message} (node {node_id})")
        self.node_id = node_id


def hess_pairs(d):
    """Upper-triangle (i, j) pairs in storage order."""
    return [(i, j) for i in range(d) for j in range(i, d)]


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(k for k, n in enumerate(shape) if n == 1 and grad.shape[k] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    """A node on the tape: an ndarray value plus how to pull gradients back."""

    __slots__ = ("value", "tape", "id", "parents", "vjp", "needs_grad")
    __array_priority__ = 100.0

    def __init__(self, tape, value, parents=(), vjp=None):
        self.value = value
        self.tape = tape
        self.needs_grad = any(p.needs_grad for p in parents)
        self.parents = parents if self.needs_grad else ()
        self.vjp = vjp if self.needs_grad else None
        self.id = tape._append(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.value.shape})"

    # arithmetic -------------------------------------------------------
    def _lift(self, other):
        if isinstance(other, Var):
            return other
        return self.tape.const(other)

    def __add__(self, other):
        return add(self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(self._lift(other)))

    def __rsub__(self, other):
        return add(self._lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, self._lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Var):
            return mul(self, self.tape.const(1.0 / np.asarray(other, dtype=np.float64)))
        return mul(self, reciprocal(other))

    def __rtruediv__(self, other):
        return mul(self._lift(other), reciprocal(self))

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        return take(self, index)


class Tape:
    """Append-only list of Vars in creation (hence topological) order."""

    def __init__(self):
        self.nodes = []
        self.slots = {}

    def _append(self, var):
        self.nodes.append(var)
        return len(self.nodes) - 1

    def __len__(self):
        return len(self.nodes)

    def const(self, value):
        return Var(self, np.asarray(value, dtype=np.float64))

    def param(self, value, slot):
        """Register a trainable leaf under ``slot``."""
        if slot in self.slots:
            raise KeyError(f"parameter slot {slot!r} already registered")
        var = Var(self, np.asarray(value, dtype=np.float64))
        var.needs_grad = True
        self.slots[slot] = var
        return var

    def release(self):
        """Drop all nodes.  Vars point back at their tape, so a finished tape is a
        reference cycle; releasing it frees the iteration's arrays immediately."""
        self.nodes = []
        self.slots = {}

    def backward(self, root):
        """Gradients of the scalar ``root`` w.r.t. every parameter slot."""
        if not isinstance(root, Var) or root.tape is not self or root.id >= len(self.nodes) \
                or self.nodes[root.id] is not root:
            raise ValueError("root is not a node of this tape")
        if root.value.size != 1:
            raise ValueError(f"root must be scalar, got shape {root.value.shape}")
        grads = [None] * (root.id + 1)
        grads[root.id] = np.ones_like(root.value)
        for k in range(root.id, -1, -1):
            g = grads[k]
            if g is None:
                continue
            node = self.nodes[k]
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.needs_grad:
                    continue
                pg = _unbroadcast(pg, parent.value.shape)
                if grads[parent.id] is None:
                    grads[parent.id] = pg
                else:
                    grads[parent.id] = grads[parent.id] + pg
        out = {}
        for slot, var in self.slots.items():
            g = grads[var.id] if var.id < len(grads) else None
            out[slot] = np.zeros_like(var.value) if g is None else g
        return out


# primitive operations ------------------------------------------------------

def add(a, b):
    return Var(a.tape, a.value + b.value, (a, b), lambda g: (g, g))


def neg(a):
    return Var(a.tape, -a.value, (a,), lambda g: (-g,))


def mul(a, b):
    av, bv = a.value, b.value
    return Var(a.tape, av * bv, (a, b), lambda g: (g * bv, g * av))


def reciprocal(a):
    if np.any(a.value == 0.0):
        raise NumericDomainError("division by zero", a.id)
    r = 1.0 / a.value
    return Var(a.tape, r, (a,), lambda g: (-g * r * r,))


def power(a, exponent):
    """``a ** exponent`` for a constant real exponent."""
    exponent = float(exponent)
    x = a.value
    if not float(exponent).is_integer() and np.any(x < 0):
        raise NumericDomainError(f"negative base for fractional power {exponent}", a.id)
    if exponent < 1 and np.any(x == 0):
        raise NumericDomainError(f"zero base for power {exponent}", a.id)
    y = x ** exponent
    if exponent == 2.0:
        return Var(a.tape, y, (a,), lambda g: (2.0 * g * x,))
    return Var(a.tape, y, (a,), lambda g: (g * exponent * x ** (exponent - 1.0),))


def pos_power(a, exponent):
    """``max(a, 0) ** exponent`` with value and partial taken as 0 where a <= 0.

    Used for the power laws whose base is only softly kept nonnegative.
    """
    exponent = float(exponent)
    x = a.value
    pos = x > 0
    xs = np.where(pos, x, 1.0)
    y = np.where(pos, xs ** exponent, 0.0)
    dy = np.where(pos, exponent * xs ** (exponent - 1.0), 0.0)
    return Var(a.tape, y, (a,), lambda g: (g * dy,))


def log(a):
    if np.any(a.value <= 0):
        raise NumericDomainError("log of non-positive value", a.id)
    x = a.value
    return Var(a.tape, np.log(x), (a,), lambda g: (g / x,))


def exp(a):
    y = np.exp(a.value)
    return Var(a.tape, y, (a,), lambda g: (g * y,))


def sqrt(a):
    if np.any(a.value < 0):
        raise NumericDomainError("sqrt of negative value", a.id)
    y = np.sqrt(a.value)
    return Var(a.tape, y, (a,), lambda g: (0.5 * g / y,))


def tanh(a):
    y = np.tanh(a.value)
    return Var(a.tape, y, (a,), lambda g: (g * (1.0 - y * y),))


def max0(a):
    """max(0, a); the partial at a == 0 is 0."""
    mask = a.value > 0
    return Var(a.tape, np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def square(a):
    return power(a, 2.0)


def total(a):
    shape = a.value.shape
    return Var(a.tape, np.asarray(a.value.sum()), (a,), lambda g: (np.broadcast_to(g, shape),))


def mean(a):
    shape = a.value.shape
    n = a.value.size
    if n == 0:
        raise NumericDomainError("mean of empty array", a.id)
    return Var(a.tape, np.asarray(a.value.mean()), (a,),
               lambda g: (np.broadcast_to(g / n, shape),))


def take(a, index):
    shape = a.value.shape

    def vjp(g):
        out = np.zeros(shape)
        out[index] = g
        return (out,)

    return Var(a.tape, a.value[index], (a,), vjp)


def stack(vars_, axis=0):
    tape = vars_[0].tape
    value = np.stack([v.value for v in vars_], axis=axis)

    def vjp(g):
        return tuple(np.take(g, k, axis=axis) for k in range(len(vars_)))

    return Var(tape, value, tuple(vars_), vjp)


def matmul_t(x, w):
    """Rows of ``x`` (any leading shape, last axis n) times ``w.T``; w is (m, n)."""
    xv, wv = x.value, w.value
    n = xv.shape[-1]
    x2 = xv.reshape(-1, n)
    y = (x2 @ wv.T).reshape(xv.shape[:-1] + (wv.shape[0],))

    def vjp(g):
        g2 = g.reshape(-1, wv.shape[0])
        gx = (g2 @ wv).reshape(xv.shape) if x.needs_grad else None
        gw = g2.T @ x2 if w.needs_grad else None
        return gx, gw

    return Var(x.tape, y, (x, w), vjp)


# jets ----------------------------------------------------------------------

class Jet:
    """Batched values with exact first and second input derivatives."""

    __slots__ = ("val", "der", "d", "pairs")

    def __init__(self, val, der, d, pairs):
        self.val = val
        self.der = der
        self.d = d
        self.pairs = tuple(pairs)

    @property
    def tape(self):
        return self.val.tape

    @property
    def value(self):
        return self.val.value

    @property
    def grad(self):
        """Gradient as an ndarray of shape (N, m, d)."""
        return np.moveaxis(self.der.value[: self.d], 0, -1)

    @property
    def hess(self):
        """Symmetric Hessian as an ndarray of shape (N, m, d, d).

        Entries that were not propagated are NaN.
        """
        d = self.d
        block = self.der.value[d:]
        out = np.full(block.shape[1:] + (d, d), np.nan)
        for p, (i, j) in enumerate(self.pairs):
            out[..., i, j] = block[p]
            out[..., j, i] = block[p]
        return out

    def hess_channel(self, i, j):
        if i > j:
            i, j = j, i
        try:
            return self.d + self.pairs.index((i, j))
        except ValueError:
            raise KeyError(f"Hessian entry ({i}, {j}) was not propagated") from None

    # taped components of a width-1 jet
    def u(self):
        return self.val[:, 0]

    def d1(self, i):
        return self.der[i, :, 0]

    def d2(self, i, j):
        return self.der[self.hess_channel(i, j), :, 0]


def seed_inputs(tape, points, pairs=None):
    """Seed coordinate jets for a batch of points of shape (N, d).

    Column k of the returned jet is input coordinate k: gradient e_k, zero
    Hessian.  A single point of shape (d,) is treated as a batch of one.
    ``pairs`` selects the Hessian entries to carry (default: all).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, d = pts.shape
    if d not in (2, 3):
        raise ValueError(f"input dimension must be 2 or 3, got {d}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite input coordinate")
    if pairs is None:
        pairs = hess_pairs(d)
    pairs = [(min(i, j), max(i, j)) for i, j in pairs]
    if any(not (0 <= i < d and 0 <= j < d) for i, j in pairs):
        raise ValueError(f"Hessian pairs {pairs} out of range for d={d}")
    der = np.zeros((d + len(pairs), n, d))
    for k in range(d):
        der[k, :, k] = 1.0
    return Jet(tape.const(pts), tape.const(der), d, pairs)


def dense(x, w, b):
    """Value-only dense layer shared by the jet path and the value path."""
    return add(matmul_t(x, w), b)


def affine_forward(w, b, z):
    """Dense layer ``W z + b`` applied to a Jet; W is an (m, n) Var, b an (m,) Var."""
    if w.value.ndim != 2 or w.value.shape[1] != z.val.value.shape[-1]:
        raise ValueError(f"weight shape {w.value.shape} does not match input width "
                         f"{z.val.value.shape[-1]}")
    if b.value.shape != (w.value.shape[0],):
        raise ValueError(f"bias shape {b.value.shape} does not match weight {w.value.shape}")
    return Jet(dense(z.val, w, b), matmul_t(z.der, w), z.d, z.pairs)


_ACTIVATIONS = ("relu2", "tanh")


def activation_derivs(kind, z):
    """sigma and its first three derivatives at the ndarray ``z``."""
    if kind == "relu2":
        zp = np.maximum(z, 0.0)
        s2 = np.where(z > 0, 2.0, 0.0)
        return zp * zp, 2.0 * zp, s2, None
    if kind == "tanh":
        t = np.tanh(z)
        s1 = 1.0 - t * t
        s2 = -2.0 * t * s1
        s3 = -2.0 * s1 * s1 + 4.0 * t * t * s1
        return t, s1, s2, s3
    raise ValueError(f"unknown activation {kind!r}; expected one of {_ACTIVATIONS}")


def activate(kind, x):
    """Elementwise activation of a value Var."""
    if kind == "tanh":
        return tanh(x)
    if kind == "relu2":
        return square(max0(x))
    raise ValueError(f"unknown activation {kind!r}; expected one of {_ACTIVATIONS}")


def _jet_activation_der(kind, z0, der, d, pairs):
    # s3 is None for relu2, whose third derivative vanishes almost everywhere
    _, s1, s2, s3 = activation_derivs(kind, z0.value)
    D = der.value
    G = D[:d]
    H = D[d:]
    out = np.empty_like(D)
    np.multiply(s1, G, out=out[:d])
    GG = np.empty_like(H)
    for p, (i, j) in enumerate(pairs):
        np.multiply(G[i], G[j], out=GG[p])
    out[d:] = s2 * GG
    out[d:] += s1 * H

    def vjp(g):
        gG = g[:d]
        gH = g[d:]
        gz = np.einsum("knm,knm->nm", gG, G) * s2
        gz += np.einsum("knm,knm->nm", gH, H) * s2
        if s3 is not None:
            gz += np.einsum("knm,knm->nm", gH, GG) * s3
        gD = np.empty_like(D)
        np.multiply(gG, s1, out=gD[:d])
        np.multiply(gH, s1, out=gD[d:])
        for p, (i, j) in enumerate(pairs):
            t = gH[p] * s2
            gD[i] += t * G[j]
            gD[j] += t * G[i]
        return gz, gD

    return Var(z0.tape, out, (z0, der), vjp)


def activation_forward(kind, z):
    """Apply the activation to a Jet, propagating gradient and Hessian."""
    return Jet(activate(kind, z.val), _jet_activation_der(kind, z.val, z.der, z.d, z.pairs),
               z.d, z.pairs)
