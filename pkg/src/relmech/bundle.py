"""Jet points of the configuration bundle and prolongation of coordinate changes.

All maps work in a global chart ``(t, q^1..q^m)`` of R x R^m.  Point data may
hold plain floats or numpy arrays with one lane per sample point; the
prolongation routines are generic over jet coefficients so that results can
be differentiated again by an enclosing seed set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from . import ad
from .expr import Expression, parse_expression

__all__ = [
    "JetPoint1",
    "JetPoint2",
    "SampleBox",
    "ChartError",
    "CoordinateChange",
    "identity_chart",
    "compose_charts",
    "chart_jets",
    "prolong_jet1",
    "prolong_jet2",
    "as_map",
]

# signature of a chart map: (t, [q^1..q^m]) -> [q'^1..q'^m]
ChartMap = Callable[[object, Sequence], list]


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class JetPoint1:
    """A point ``(t, q, v)`` of J^1Q; ``v`` holds the velocity coordinates q^i_t."""

    t: float
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _vec(self.q))
        object.__setattr__(self, "v", _vec(self.v))
        if self.q.shape != self.v.shape:
            raise ValueError("q and v must have the same shape")

    @property
    def m(self) -> int:
        return len(self.q)


@dataclass(frozen=True)
class JetPoint2(JetPoint1):
    """A point ``(t, q, v, a)`` of J^2Q; ``a`` holds the accelerations q^i_tt."""

    a: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        if self.a is None:
            raise ValueError("JetPoint2 needs an acceleration vector")
        object.__setattr__(self, "a", _vec(self.a))
        if self.a.shape != self.q.shape:
            raise ValueError("a must have the same shape as q")

    def first(self) -> JetPoint1:
        return JetPoint1(self.t, self.q, self.v)


@dataclass(frozen=True)
class SampleBox:
    """Axis-aligned region sampled with a scrambled Sobol sequence."""

    t: tuple[float, float] = (0.0, 2.0)
    q: tuple[float, float] = (-2.0, 2.0)
    v: tuple[float, float] = (-2.0, 2.0)
    n: int = 256
    seed: int = 0

    def sample(self, m: int, with_velocity: bool = True) -> JetPoint1:
        """Return all sample points as one vectorised :class:`JetPoint1`.

        ``q`` and ``v`` have shape ``(m, n)``; ``t`` has shape ``(n,)``.
        Without velocities ``v`` is zero.
        """
        d = 1 + m + (m if with_velocity else 0)
        sobol = qmc.Sobol(d, scramble=True, seed=self.seed)
        u = sobol.random(self.n).T
        lo = np.array([self.t[0]] + [self.q[0]] * m + [self.v[0]] * (d - 1 - m))
        hi = np.array([self.t[1]] + [self.q[1]] * m + [self.v[1]] * (d - 1 - m))
        x = lo[:, None] + (hi - lo)[:, None] * u
        t = x[0]
        q = x[1 : 1 + m]
        v = x[1 + m :] if with_velocity else np.zeros_like(q)
        return JetPoint1(t, q, v)

    def with_points(self, n: int) -> "SampleBox":
        return SampleBox(self.t, self.q, self.v, n, self.seed)


class ChartError(ValueError):
    """A coordinate change failed validation or was used outside its region."""


def as_map(exprs: Sequence[Expression]) -> ChartMap:
    exprs = tuple(exprs)
    return lambda t, q: [e(t, q, ()) for e in exprs]


@dataclass(frozen=True)
class CoordinateChange:
    """A bundle coordinate change ``t' = t + c``, ``q' = forward(t, q)``.

    ``inverse(t', q')`` returns ``q``.  Each map takes the time of its own
    source chart, so the inverse receives ``t' = t + c``.  Unless
    ``validate=False`` the pair is checked on the sample box at construction:
    the round trip must reproduce ``q`` within 1e-10 and the Jacobian of the
    forward map must have ``|det| > 1e-12``.
    """

    m: int
    forward: ChartMap
    inverse: ChartMap
    time_offset: float = 0.0
    name: str = ""
    box: SampleBox = field(default_factory=lambda: SampleBox(n=64))
    validate: bool = True
    forward_src: tuple[str, ...] | None = None
    inverse_src: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.validate:
            self._check()

    @classmethod
    def from_strings(
        cls,
        forward: Sequence[str],
        inverse: Sequence[str],
        m: int | None = None,
        time_offset: float = 0.0,
        constants: Mapping[str, float] | None = None,
        name: str = "",
        box: SampleBox | None = None,
        validate: bool = True,
    ) -> "CoordinateChange":
        m = m or len(forward)
        if len(forward) != m or len(inverse) != m:
            raise ChartError(f"chart {name!r} needs {m} forward and {m} inverse components")
        fwd = [parse_expression(s, m, constants) for s in forward]
        inv = [parse_expression(s, m, constants) for s in inverse]
        for e in fwd + inv:
            if e.uses_velocity():
                raise ChartError(f"chart {name!r}: component {e} depends on velocities")
        return cls(
            m,
            as_map(fwd),
            as_map(inv),
            float(time_offset),
            name,
            box or SampleBox(n=64),
            validate,
            tuple(str(e) for e in fwd),
            tuple(str(e) for e in inv),
        )

    def _check(self):
        p = self.box.sample(self.m, with_velocity=False)
        t, q = p.t, list(p.q)
        qp = self.forward(t, q)
        back = self.inverse(t + self.time_offset, qp)
        err = max(float(np.max(np.abs(_vec(b) - a))) for a, b in zip(q, back))
        if not err <= 1e-10:
            raise ChartError(
                f"chart {self.name!r}: forward and inverse do not compose to the identity "
                f"(max error {err:.3g})"
            )
        jac = np.empty((len(t), self.m, self.m))
        for i, (_, grad, _h) in enumerate(chart_jets(self.forward, t, q, order=1)):
            for j in range(self.m):
                jac[:, i, j] = np.broadcast_to(grad[1 + j], t.shape)
        det = np.linalg.det(jac)
        if not np.min(np.abs(det)) > 1e-12:
            raise ChartError(f"chart {self.name!r}: Jacobian is singular on the sample box")

    def inverse_change(self) -> "CoordinateChange":
        return CoordinateChange(
            self.m,
            self.inverse,
            self.forward,
            -self.time_offset,
            f"inverse({self.name})" if self.name else "",
            self.box,
            False,
            self.inverse_src,
            self.forward_src,
        )

    def jacobian(self, t, q) -> np.ndarray:
        """``d q'^i / d q^j`` at ``(t, q)`` as an ``(m, m, ...)`` array."""
        rows = []
        for _, grad, _h in chart_jets(self.forward, t, list(q), order=1):
            rows.append([np.broadcast_to(_vec(g), np.shape(t)) for g in grad[1:]])
        return np.array(rows, dtype=float)


def identity_chart(m: int) -> CoordinateChange:
    names = [f"q{i + 1}" for i in range(m)]
    return CoordinateChange.from_strings(names, names, m, name="identity")


def compose_charts(first: CoordinateChange, second: CoordinateChange) -> CoordinateChange:
    """The change ``second . first`` (apply ``first``, then ``second``)."""
    if first.m != second.m:
        raise ChartError("cannot compose charts of different dimension")
    c1, c2 = first.time_offset, second.time_offset

    def forward(t, q):
        return second.forward(t + c1, first.forward(t, q))

    def inverse(t, q):
        return first.inverse(t - c2, second.inverse(t, q))

    return CoordinateChange(first.m, forward, inverse, c1 + c2, f"{second.name}*{first.name}", first.box)


def chart_jets(fn: ChartMap, t, q: Sequence, order: int = 2):
    """Value, gradient and Hessian of each component of ``fn`` w.r.t. ``(t, q)``.

    Index 0 of the gradient is the time derivative, ``1..m`` the q-derivatives.
    """
    xs = ad.seed([t, *q], order=order)
    ys = fn(xs[0], xs[1:])
    return [ad.derivatives(y, xs) for y in ys]


def prolong_jet1(phi: CoordinateChange, p: JetPoint1) -> JetPoint1:
    """Transport ``(t, q, v)`` through ``phi``: v'^i = d_t q'^i + v^j d_j q'^i."""
    t, q, v = _prolong1(phi.forward, p.t, list(p.q), list(p.v))
    return JetPoint1(p.t + phi.time_offset, _stack(q), _stack(v))


def prolong_jet2(phi: CoordinateChange, p: JetPoint2) -> JetPoint2:
    """Second-order prolongation of ``phi`` applied to a point of J^2Q."""
    qp, vp, ap = _prolong2(phi.forward, p.t, list(p.q), list(p.v), list(p.a))
    return JetPoint2(p.t + phi.time_offset, _stack(qp), _stack(vp), _stack(ap))


def _stack(xs) -> np.ndarray:
    return np.array([np.asarray(x, dtype=float) for x in np.broadcast_arrays(*xs)])


def _prolong1(fn: ChartMap, t, q: list, v: list):
    m = len(q)
    out_q, out_v = [], []
    for val, grad, _h in chart_jets(fn, t, q, order=1):
        out_q.append(val)
        vel = grad[0]
        for j in range(m):
            vel = vel + v[j] * grad[1 + j]
        out_v.append(vel)
    return t, out_q, out_v


def _prolong2(fn: ChartMap, t, q: list, v: list, a: list):
    """Generic second-order prolongation (coefficients may be jets)."""
    m = len(q)
    out_q, out_v, out_a = [], [], []
    for val, g, H in chart_jets(fn, t, q, order=2):
        vel = g[0]
        acc = H[0][0]
        for j in range(m):
            vel = vel + v[j] * g[1 + j]
            acc = acc + a[j] * g[1 + j] + 2.0 * v[j] * H[1 + j][0]
            for k in range(m):
                acc = acc + v[j] * v[k] * H[1 + j][1 + k]
        out_q.append(val)
        out_v.append(vel)
        out_a.append(acc)
    return out_q, out_v, out_a
