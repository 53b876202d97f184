"""Truncated second-order Taylor arithmetic (forward mode).

A :class:`Taylor2` carries a value, a gradient and (optionally) the upper
triangle of a Hessian with respect to one seed set.  Coefficients may be
floats, numpy arrays (one lane per sample point) or ``Taylor2`` objects of an
*outer* seed set, which is what lets derived evaluators be differentiated
again.  Seed sets are told apart by an integer tag; a later (inner) seed set
always has a larger tag, and objects carrying a smaller tag are treated as
constants by it.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "Taylor2",
    "Taylor2Scalar",
    "seed",
    "derivatives",
    "gradient",
    "primal",
    "taylor2_eval",
    "fd_gradient",
    "fd_hessian",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
    "power",
]

_tags = itertools.count(1)


class DomainError(ArithmeticError):
    """An elementary function was evaluated outside its domain."""


@lru_cache(maxsize=None)
def _pairs(n: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, j) for i in range(n) for j in range(i, n))


def _tri_index(i: int, j: int, n: int) -> int:
    if i > j:
        i, j = j, i
    return i * n - i * (i - 1) // 2 + (j - i)


class Taylor2:
    """Value, gradient and upper-triangular Hessian w.r.t. one seed set.

    ``hess`` is ``None`` for jets truncated at first order.
    """

    __slots__ = ("tag", "value", "grad", "hess")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, tag, value, grad, hess=None):
        self.tag = tag
        self.value = value
        self.grad = grad
        self.hess = hess

    @property
    def n(self) -> int:
        return len(self.grad)

    @property
    def order(self) -> int:
        return 1 if self.hess is None else 2

    def hessian(self) -> list[list]:
        """Full symmetric Hessian as nested lists (both triangles share entries)."""
        n = self.n
        if self.hess is None:
            raise ValueError("first-order jet carries no Hessian")
        return [[self.hess[_tri_index(i, j, n)] for j in range(n)] for i in range(n)]

    def __repr__(self) -> str:
        return f"Taylor2(value={self.value!r}, grad={list(self.grad)!r}, order={self.order})"

    # -- internal helpers -------------------------------------------------

    def _scale(self, c, value):
        hess = None if self.hess is None else tuple(c * h for h in self.hess)
        return Taylor2(self.tag, value, tuple(c * g for g in self.grad), hess)

    def chain(self, f0, f1, f2=0.0):
        """Apply a scalar function given its value and first two derivatives at ``self.value``."""
        grad = tuple(f1 * g for g in self.grad)
        if self.hess is None:
            return Taylor2(self.tag, f0, grad)
        g = self.grad
        hess = tuple(
            f1 * h + f2 * g[i] * g[j]
            for h, (i, j) in zip(self.hess, _pairs(len(g)))
        )
        return Taylor2(self.tag, f0, grad, hess)

    def _inner(self, other) -> bool:
        # True when ``other`` belongs to a deeper seed set than self
        return isinstance(other, Taylor2) and other.tag > self.tag

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Taylor2):
            if other.tag == self.tag:
                hess = None
                if self.hess is not None:
                    hess = tuple(a + b for a, b in zip(self.hess, other.hess))
                return Taylor2(
                    self.tag,
                    self.value + other.value,
                    tuple(a + b for a, b in zip(self.grad, other.grad)),
                    hess,
                )
            if other.tag > self.tag:
                return other.__radd__(self)
        return Taylor2(self.tag, self.value + other, self.grad, self.hess)

    def __radd__(self, other):
        return Taylor2(self.tag, other + self.value, self.grad, self.hess)

    def __neg__(self):
        hess = None if self.hess is None else tuple(-h for h in self.hess)
        return Taylor2(self.tag, -self.value, tuple(-g for g in self.grad), hess)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, Taylor2) and other.tag >= self.tag:
            return self + (-other)
        return Taylor2(self.tag, self.value - other, self.grad, self.hess)

    def __rsub__(self, other):
        return (-self).__radd__(other)

    def __mul__(self, other):
        if isinstance(other, Taylor2):
            if other.tag == self.tag:
                a0, b0 = self.value, other.value
                ga, gb = self.grad, other.grad
                grad = tuple(a0 * y + b0 * x for x, y in zip(ga, gb))
                hess = None
                if self.hess is not None:
                    hess = tuple(
                        a0 * hb + b0 * ha + ga[i] * gb[j] + ga[j] * gb[i]
                        for ha, hb, (i, j) in zip(self.hess, other.hess, _pairs(len(ga)))
                    )
                return Taylor2(self.tag, a0 * b0, grad, hess)
            if other.tag > self.tag:
                return other.__rmul__(self)
        return self._scale(other, self.value * other)

    def __rmul__(self, other):
        return self._scale(other, other * self.value)

    def reciprocal(self):
        v = self.value
        if np.any(primal(v) == 0):
            raise DomainError("division by zero")
        r = 1.0 / v
        r2 = r * r
        return self.chain(r, -r2, 2.0 * r2 * r)

    def __truediv__(self, other):
        if isinstance(other, Taylor2) and other.tag >= self.tag:
            return self * other.reciprocal()
        if np.any(primal(other) == 0):
            raise DomainError("division by zero")
        return self._scale(1.0 / other, self.value / other)

    def __rtruediv__(self, other):
        return other * self.reciprocal()

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(other, self)


Taylor2Scalar = Taylor2


def primal(x):
    """Strip all jet layers and return the underlying float/array value."""
    while isinstance(x, Taylor2):
        x = x.value
    return x


# -- elementary functions, generic over floats, arrays and jets -------------


def sin(x):
    if isinstance(x, Taylor2):
        s, c = sin(x.value), cos(x.value)
        return x.chain(s, c, -s)
    return np.sin(x)


def cos(x):
    if isinstance(x, Taylor2):
        s, c = sin(x.value), cos(x.value)
        return x.chain(c, -s, -c)
    return np.cos(x)


def exp(x):
    if isinstance(x, Taylor2):
        e = exp(x.value)
        return x.chain(e, e, e)
    return np.exp(x)


def log(x):
    if np.any(primal(x) <= 0):
        raise DomainError("log of non-positive argument")
    if isinstance(x, Taylor2):
        r = 1.0 / x.value
        return x.chain(log(x.value), r, -r * r)
    return np.log(x)


def sqrt(x):
    p = primal(x)
    if np.any(p < 0):
        raise DomainError("sqrt of negative argument")
    if isinstance(x, Taylor2):
        if np.any(p == 0):
            raise DomainError("sqrt is not differentiable at 0")
        s = sqrt(x.value)
        return x.chain(s, 0.5 / s, -0.25 / (s * x.value))
    return np.sqrt(x)


def _is_int(c) -> bool:
    return isinstance(c, (int, np.integer)) or (
        isinstance(c, (float, np.floating)) and float(c).is_integer()
    )


def power(x, c):
    """``x ** c``; a constant integer exponent is valid for any real base."""
    if isinstance(c, Taylor2) and not (isinstance(x, Taylor2) and x.tag > c.tag):
        # variable exponent: x**c = exp(c*log(x))
        return exp(c * log(x))
    if _is_int(c):
        k = int(c)
        if k == 0:
            return 1.0 + 0.0 * x
        if k == 1:
            return x
        if k == 2:
            return x * x
        if k < 0:
            if np.any(primal(x) == 0):
                raise DomainError("division by zero")
            return 1.0 / power(x, -k)
        if isinstance(x, Taylor2):
            v = x.value
            vk2 = power(v, k - 2)
            return x.chain(vk2 * v * v, k * vk2 * v, k * (k - 1) * vk2)
        return x**k
    p = primal(x)
    if np.any(p < 0) or (isinstance(x, Taylor2) and np.any(p == 0)):
        raise DomainError("non-integer power of non-positive argument")
    if isinstance(x, Taylor2):
        v = x.value
        vc2 = power(v, c - 2)
        return x.chain(vc2 * v * v, c * vc2 * v, c * (c - 1) * vc2)
    return x**c


# -- seeding and extraction ------------------------------------------------


def seed(values: Sequence, order: int = 2) -> list[Taylor2]:
    """Fresh independent variables at ``values`` (one new seed set)."""
    tag = next(_tags)
    n = len(values)
    zero_hess = (0.0,) * (n * (n + 1) // 2) if order == 2 else None
    out = []
    for i, v in enumerate(values):
        grad = tuple(1.0 if j == i else 0.0 for j in range(n))
        out.append(Taylor2(tag, v, grad, zero_hess))
    return out


def derivatives(y, seeds: Sequence[Taylor2]):
    """Return ``(value, grad, hess)`` of ``y`` w.r.t. ``seeds``.

    ``hess`` is a full nested list (``None`` for first-order seeds).  A ``y``
    that does not depend on the seeds has zero derivatives.
    """
    n = len(seeds)
    order2 = n > 0 and seeds[0].hess is not None
    if n and isinstance(y, Taylor2) and y.tag == seeds[0].tag:
        return y.value, list(y.grad), (y.hessian() if order2 else None)
    zeros = [0.0] * n
    return y, zeros, ([[0.0] * n for _ in range(n)] if order2 else None)


def gradient(y, seeds: Sequence[Taylor2]):
    """Return ``(value, grad)``; cheaper spelling of :func:`derivatives`."""
    if seeds and isinstance(y, Taylor2) and y.tag == seeds[0].tag:
        return y.value, y.grad
    return y, (0.0,) * len(seeds)


def taylor2_eval(f: Callable, x: Sequence[float]) -> Taylor2:
    """Evaluate ``f(*vars)`` at ``x`` with exact value, gradient and Hessian."""
    xs = seed([float(v) for v in x])
    y = f(*xs)
    if xs and isinstance(y, Taylor2) and y.tag == xs[0].tag:
        return y
    n = len(xs)
    tag = xs[0].tag if xs else next(_tags)
    return Taylor2(tag, y, (0.0,) * n, (0.0,) * (n * (n + 1) // 2))


# -- finite-difference oracles (never used on the production path) --------
#
# Written against plain Python arithmetic so callers may pass mpmath numbers
# and an mpmath-backed ``f`` to push rounding error below the h**2 term.


def fd_gradient(f: Callable, x: Sequence, h=1e-5) -> list:
    """Central-difference gradient."""
    x = list(x)
    out = []
    for i in range(len(x)):
        xp, xm = list(x), list(x)
        xp[i] += h
        xm[i] -= h
        out.append((f(*xp) - f(*xm)) / (2 * h))
    return out


def fd_hessian(f: Callable, x: Sequence, h=1e-5) -> list[list]:
    """Central-difference Hessian (three-point diagonal, four-point mixed)."""
    x = list(x)
    n = len(x)
    f0 = f(*x)

    def at(shift):
        z = list(x)
        for k, d in shift:
            z[k] += d
        return f(*z)

    H = [[None] * n for _ in range(n)]
    for i in range(n):
        H[i][i] = (at([(i, h)]) - 2 * f0 + at([(i, -h)])) / (h * h)
        for j in range(i + 1, n):
            pp = at([(i, h), (j, h)])
            pm = at([(i, h), (j, -h)])
            mp = at([(i, -h), (j, h)])
            mm = at([(i, -h), (j, -h)])
            H[i][j] = H[j][i] = (pp - pm - mp + mm) / (4 * h * h)
    return H
