"""Forward-mode automatic differentiation over numpy arrays.

A :class:`Dual` carries a value array together with a derivative array that
has one extra trailing axis enumerating seed directions.  Because the
direction axis sits at the end, numpy broadcasting rules apply unchanged to
the leading axes, so code written for plain arrays (add, multiply, divide,
``sqrt``, ``sum``, ``roll``, integer powers, ``einsum``) runs on duals and
produces exact first derivatives; there is no truncation error.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Dual", "value", "sqrt", "roll", "einsum", "seed_identity"]


def _aligned(dot: np.ndarray, val: np.ndarray) -> np.ndarray:
    """Broadcast dot up to val.shape + (ndirs,)."""
    target = val.shape + (dot.shape[-1],)
    if dot.shape != target:
        dot = np.broadcast_to(dot, target)
    return dot


class Dual:
    """Array of first-order dual numbers sharing one set of seed directions."""

    __slots__ = ("val", "dot")

    # Make numpy defer binary ufuncs to the reflected operators below instead
    # of broadcasting a Dual as an opaque scalar.
    __array_ufunc__ = None

    def __init__(self, val, dot):
        self.val = np.asarray(val, dtype=float)
        self.dot = _aligned(np.asarray(dot, dtype=float), self.val)

    @property
    def ndirs(self) -> int:
        return self.dot.shape[-1]

    @property
    def ndim(self) -> int:
        return self.val.ndim

    @property
    def shape(self):
        return self.val.shape

    def __repr__(self):
        return f"Dual(val={self.val!r}, ndirs={self.ndirs})"

    def __getitem__(self, key):
        return Dual(self.val[key], self.dot[key])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Dual(self.val.reshape(shape), self.dot.reshape(shape + (self.ndirs,)))

    def sum(self, axis=None):
        if axis is None:
            axes = tuple(range(self.val.ndim))
        else:
            axes = (axis % self.val.ndim,)
        return Dual(self.val.sum(axis=axis), self.dot.sum(axis=axes))

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.dot + other.dot)
        return Dual(self.val + other, self.dot)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.dot - other.dot)
        return Dual(self.val - other, self.dot)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.dot)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.dot * other.val[..., None] + other.dot * self.val[..., None],
            )
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, self.dot * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            val = self.val / other.val
            dot = (self.dot - val[..., None] * other.dot) / other.val[..., None]
            return Dual(val, dot)
        other = np.asarray(other, dtype=float)
        return Dual(self.val / other, self.dot / other[..., None])

    def __rtruediv__(self, other):
        other = np.asarray(other, dtype=float)
        val = other / self.val
        return Dual(val, -val[..., None] * self.dot / self.val[..., None])

    def __pow__(self, p):
        if not isinstance(p, (int, np.integer)):
            raise TypeError("only integer powers are supported")
        return Dual(self.val ** p, p * (self.val ** (p - 1))[..., None] * self.dot)


def value(x):
    """Value part of x, whether x is a Dual or a plain array."""
    return x.val if isinstance(x, Dual) else np.asarray(x)


def seed_identity(x: np.ndarray) -> Dual:
    """Wrap x with one seed direction per entry (the full Jacobian seed)."""
    x = np.asarray(x, dtype=float)
    return Dual(x, np.eye(x.size).reshape(x.shape + (x.size,)))


def sqrt(x):
    if isinstance(x, Dual):
        root = np.sqrt(x.val)
        return Dual(root, x.dot / (2.0 * root[..., None]))
    return np.sqrt(x)


def roll(x, shift, axis):
    if isinstance(x, Dual):
        return Dual(np.roll(x.val, shift, axis), np.roll(x.dot, shift, axis))
    return np.roll(x, shift, axis)


def einsum(subscripts: str, *operands):
    """einsum over a mix of Dual and plain operands, applying the product rule.

    Returns a plain array when no operand is a Dual.
    """
    ins, out = subscripts.split("->")
    terms = ins.split(",")
    spare = next(c for c in "KZYXWV" if c not in subscripts)
    vals = [op.val if isinstance(op, Dual) else np.asarray(op) for op in operands]
    res_val = np.einsum(subscripts, *vals)
    res_dot = None
    for pos, op in enumerate(operands):
        if not isinstance(op, Dual):
            continue
        dotted = list(terms)
        dotted[pos] = dotted[pos] + spare
        sub = ",".join(dotted) + "->" + out + spare
        args = list(vals)
        args[pos] = op.dot
        term = np.einsum(sub, *args)
        res_dot = term if res_dot is None else res_dot + term
    if res_dot is None:
        return res_val
    return Dual(res_val, res_dot)
