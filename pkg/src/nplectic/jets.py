"""Second-order jets: value, gradient and Hessian carried through arithmetic.

A jet holds arrays ``value`` of shape ``S``, ``grad`` of shape ``S + (d,)`` and
``hess`` of shape ``S + (d, d)``.  ``S`` usually starts with a batch axis over
sample points followed by tensor axes.  Derivative axes always come last.

Lower orders are allowed: a jet whose ``hess`` is ``None`` is exact to first
order only, and one with ``grad`` also ``None`` carries values alone.  Binary
operations truncate to the smaller order, and ``derivative`` drops one order.
"""

from __future__ import annotations

from itertools import combinations
from typing import Callable, Sequence

import numpy as np

_DERIV_LETTERS = "YZ"


class Jet2:
    __slots__ = ("value", "grad", "hess")

    def __init__(self, value, grad=None, hess=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None if grad is None else np.asarray(grad, dtype=float)
        self.hess = None if hess is None else np.asarray(hess, dtype=float)
        if self.hess is not None and self.grad is None:
            raise ValueError("a jet with a Hessian needs a gradient")

    # -- basic properties -------------------------------------------------
    @property
    def order(self) -> int:
        if self.hess is not None:
            return 2
        return 1 if self.grad is not None else 0

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def parts(self):
        return [p for p in (self.value, self.grad, self.hess) if p is not None]

    def truncate(self, order: int) -> "Jet2":
        if order >= self.order:
            return self
        return Jet2(self.value, self.grad if order >= 1 else None, None)

    @classmethod
    def constant(cls, value, dim: int, order: int = 2) -> "Jet2":
        value = np.asarray(value, dtype=float)
        grad = np.zeros(value.shape + (dim,)) if order >= 1 else None
        hess = np.zeros(value.shape + (dim, dim)) if order >= 2 else None
        return cls(value, grad, hess)

    @classmethod
    def coordinate(cls, points, index: int, order: int = 2) -> "Jet2":
        """Jet of the coordinate function ``x[index]`` at ``points`` (..., d)."""
        points = np.asarray(points, dtype=float)
        dim = points.shape[-1]
        grad = hess = None
        if order >= 1:
            grad = np.zeros(points.shape)
            grad[..., index] = 1.0
        if order >= 2:
            hess = np.zeros(points.shape + (dim,))
        return cls(points[..., index], grad, hess)

    def __repr__(self) -> str:
        return f"Jet2(value={self.value!r}, grad={self.grad!r}, hess={self.hess!r})"

    # -- structural maps (act on value axes only) -------------------------
    def tmap(self, fn: Callable[[np.ndarray, int], np.ndarray]) -> "Jet2":
        """Apply a linear map to the value axes; ``fn(arr, extra)`` must keep
        the last ``extra`` axes in place."""
        return Jet2(
            fn(self.value, 0),
            None if self.grad is None else fn(self.grad, 1),
            None if self.hess is None else fn(self.hess, 2),
        )

    def transpose(self, axes: Sequence[int]) -> "Jet2":
        axes = list(axes)

        def fn(arr, extra):
            n = len(axes)
            return arr.transpose(axes + list(range(n, n + extra)))

        return self.tmap(fn)

    def moveaxis(self, source: int, destination: int) -> "Jet2":
        order = list(range(self.ndim))
        src = order.pop(source % self.ndim)
        order.insert(destination % self.ndim, src)
        return self.transpose(order)

    def reshape(self, shape: Sequence[int]) -> "Jet2":
        shape = tuple(shape)

        def fn(arr, extra):
            return arr.reshape(shape + arr.shape[arr.ndim - extra:])

        return self.tmap(fn)

    def __getitem__(self, index) -> "Jet2":
        if not isinstance(index, tuple):
            index = (index,)
        full = _pad_index(index, self.ndim)
        return self.tmap(lambda arr, extra: arr[full])

    def sum(self, axis) -> "Jet2":
        axis = tuple(np.atleast_1d(axis)) if not isinstance(axis, tuple) else axis
        axis = tuple(a % self.ndim for a in axis)
        return self.tmap(lambda arr, extra: arr.sum(axis=axis))

    def derivative(self) -> "Jet2":
        """Jet of the partial derivatives, with the new index as the last value axis."""
        if self.grad is None:
            raise ValueError("cannot differentiate a jet of order 0")
        return Jet2(self.grad, self.hess, None)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.value))) if self.value.size else 0.0

    # -- arithmetic --------------------------------------------------------
    def __neg__(self) -> "Jet2":
        return Jet2(*[-p for p in self.parts()])

    def __add__(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            order = min(self.order, other.order)
            a, b = self.truncate(order), other.truncate(order)
            return Jet2(*[p + q for p, q in zip(a.parts(), b.parts())])
        other = np.asarray(other, dtype=float)
        return Jet2(self.value + other, *_broadcast_derivs(self, other))

    __radd__ = __add__

    def __sub__(self, other) -> "Jet2":
        return self + (-other)

    def __rsub__(self, other) -> "Jet2":
        return (-self) + other

    def __mul__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            c = np.asarray(other, dtype=float)
            return Jet2(
                self.value * c,
                None if self.grad is None else self.grad * c[..., None],
                None if self.hess is None else self.hess * c[..., None, None],
            )
        order = min(self.order, other.order)
        a, b = self.truncate(order), other.truncate(order)
        value = a.value * b.value
        grad = hess = None
        if order >= 1:
            grad = a.grad * b.value[..., None] + a.value[..., None] * b.grad
        if order >= 2:
            cross = a.grad[..., :, None] * b.grad[..., None, :]
            hess = _sym(a.hess * b.value[..., None, None] + a.value[..., None, None] * b.hess + 2.0 * cross)
        return Jet2(value, grad, hess)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> "Jet2":
        return self.reciprocal() * other

    def compose(self, f0, f1, f2) -> "Jet2":
        """Apply a scalar function given its value and first two derivatives
        (already evaluated at ``self.value``)."""
        grad = hess = None
        if self.order >= 1:
            grad = f1[..., None] * self.grad
        if self.order >= 2:
            hess = _sym(f2[..., None, None] * (self.grad[..., :, None] * self.grad[..., None, :])
                        + f1[..., None, None] * self.hess)
        return Jet2(f0, grad, hess)

    def reciprocal(self) -> "Jet2":
        v = self.value
        inv = 1.0 / v
        return self.compose(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __pow__(self, n: int) -> "Jet2":
        n = int(n)
        if n == 0:
            return Jet2.constant(np.ones_like(self.value), self._dim(), self.order)
        if n < 0:
            return (self ** (-n)).reciprocal()
        v = self.value
        f0 = v ** n
        f1 = n * v ** (n - 1)
        f2 = n * (n - 1) * v ** (n - 2) if n >= 2 else np.zeros_like(v)
        return self.compose(f0, f1, f2)

    def sin(self) -> "Jet2":
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose(s, c, -s)

    def cos(self) -> "Jet2":
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose(c, -s, -c)

    def exp(self) -> "Jet2":
        e = np.exp(self.value)
        return self.compose(e, e, e)

    def _dim(self) -> int:
        return 0 if self.grad is None else self.grad.shape[-1]


def _sym(h: np.ndarray) -> np.ndarray:
    """Exactly symmetric part in the two derivative axes."""
    return 0.5 * (h + np.swapaxes(h, -1, -2))


def _pad_index(index: tuple, nvalue: int) -> tuple:
    if Ellipsis in index:
        # expand the ellipsis against the value axes only
        i = index.index(Ellipsis)
        used = sum(1 for k in index if k is not Ellipsis and k is not None)
        fill = (slice(None),) * (nvalue - used)
        return index[:i] + fill + index[i + 1:] + (Ellipsis,)
    return index + (Ellipsis,)


def _broadcast_derivs(jet: Jet2, const: np.ndarray):
    shape = np.broadcast_shapes(jet.value.shape, const.shape)
    grad = hess = None
    if jet.grad is not None:
        grad = np.broadcast_to(jet.grad, shape + jet.grad.shape[-1:])
    if jet.hess is not None:
        hess = np.broadcast_to(jet.hess, shape + jet.hess.shape[-2:])
    return grad, hess


def jeinsum(subscripts: str, *operands) -> Jet2:
    """``numpy.einsum`` with the product rule applied through jet operands.

    Operands that are plain arrays are treated as constants.  Subscripts must
    be explicit (``->`` present) and must not use the letters Y or Z.
    """
    lhs, out = subscripts.replace(" ", "").split("->")
    specs = lhs.split(",")
    if len(specs) != len(operands):
        raise ValueError("subscript count does not match operands")
    jets = [i for i, op in enumerate(operands) if isinstance(op, Jet2)]
    order = min([operands[i].order for i in jets], default=0)
    vals = [op.value if isinstance(op, Jet2) else np.asarray(op, dtype=float) for op in operands]
    value = np.einsum(subscripts, *vals)
    if not jets or order == 0:
        return Jet2(value)

    def term(replacements):
        args, subs = list(vals), list(specs)
        out_extra = ""
        for idx, (part, letters) in replacements.items():
            args[idx] = part
            subs[idx] = subs[idx] + letters
        for letters in sorted("".join(l for _, l in replacements.values())):
            out_extra += letters
        return np.einsum(",".join(subs) + "->" + out + out_extra, *args)

    grad = sum(term({i: (operands[i].grad, "Y")}) for i in jets)
    hess = None
    if order >= 2:
        hess = sum(term({i: (operands[i].hess, "YZ")}) for i in jets)
        for i in jets:
            for j in jets:
                if i != j:
                    hess = hess + term({i: (operands[i].grad, "Y"), j: (operands[j].grad, "Z")})
        hess = _sym(hess)
    return Jet2(value, grad, hess)


def stack(jets: Sequence[Jet2], axis: int = -1) -> Jet2:
    """Stack jets along a new value axis."""
    order = min(j.order for j in jets)
    jets = [j.truncate(order) for j in jets]
    nd = jets[0].ndim
    ax = axis if axis >= 0 else nd + 1 + axis
    parts = [np.stack([j.parts()[k] for j in jets], axis=ax) for k in range(order + 1)]
    return Jet2(*parts)


def zeros(shape: tuple, dim: int, order: int = 2) -> Jet2:
    return Jet2.constant(np.zeros(shape), dim, order)


# -- alternation helpers ------------------------------------------------------

def perm_sign(seq: Sequence[int]) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        while seq[i] != i:
            j = seq[i]
            seq[i], seq[j] = seq[j], seq[i]
            sign = -sign
    return sign


def shuffles(p: int, k: int):
    """Yield (sign, axes) for every (p, k)-shuffle.  ``axes[t]`` is the source
    axis (in block order) that feeds result position ``t``."""
    n = p + k
    for first in combinations(range(n), p):
        rest = [t for t in range(n) if t not in first]
        pos = [0] * n
        for r, t in enumerate(first):
            pos[t] = r
        for r, t in enumerate(rest):
            pos[t] = p + r
        yield perm_sign(list(first) + rest), pos


def shuffle_sum(jet: Jet2, start: int, p: int, k: int) -> Jet2:
    """Shuffle-alternate value axes ``start .. start+p+k-1`` where the first
    ``p`` and last ``k`` of them are each already antisymmetric.

    This is the wedge product of the two blocks in the determinant convention.
    """
    n = p + k
    if n <= 1 or p == 0 or k == 0:
        return jet
    nd = jet.ndim
    total = None
    for sign, pos in shuffles(p, k):
        axes = list(range(start)) + [start + q for q in pos] + list(range(start + n, nd))
        piece = jet.transpose(axes)
        piece = piece if sign > 0 else -piece
        total = piece if total is None else total + piece
    return total
