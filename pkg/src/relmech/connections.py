"""Dynamic equations, reference frames, dynamic connections and their calculus.

Evaluators are plain callables on ``(t, q, v)`` (lists of components) that
accept floats, arrays or jets, so every construction below can itself be
differentiated by an enclosing seed set.  Index conventions:

* a :class:`DynamicConnection` returns rows ``C[i] = [gamma^i_0, gamma^i_1, ..., gamma^i_m]``;
* ``d_j`` is a q-derivative at fixed velocity, ``dv_j`` a velocity derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from . import ad
from .bundle import JetPoint1, JetPoint2, SampleBox, chart_jets
from .expr import parse_expression

__all__ = [
    "DynamicEquation",
    "ReferenceFrame",
    "DynamicConnection",
    "SecondOrderConnection",
    "ConnectionComponents",
    "TorsionTensor",
    "CurvatureTensor",
    "QuadraticFit",
    "relative_velocity",
    "frame_jet_prolongation",
    "xi_from_gamma",
    "gamma_from_xi",
    "torsion",
    "curvature",
    "vertical_covariant_differential",
    "quadratic_coefficients",
    "zero_equation",
    "zero_frame",
]


def _to_array(xs, shape=()) -> np.ndarray:
    """Stack components, broadcasting constants up to the sample ``shape``."""
    xs = [ad.primal(x) for x in xs] + [np.zeros(shape)]
    return np.array([np.asarray(x, dtype=float) for x in np.broadcast_arrays(*xs)[:-1]])


def _sample_shape(t, *comps) -> tuple:
    return np.broadcast_shapes(np.shape(t), *(np.shape(c) for c in comps))


def _check_dim(m: int, p) -> None:
    if len(p.q) != m:
        raise ValueError(f"point has dimension {len(p.q)}, object expects {m}")


@dataclass(frozen=True)
class DynamicEquation:
    """Explicit second-order equation ``q^i_tt = xi^i(t, q, v)``."""

    m: int
    rhs: Callable[[object, Sequence, Sequence], list]
    label: str = ""
    sources: tuple[str, ...] | None = None

    @classmethod
    def from_strings(
        cls,
        sources: Sequence[str],
        constants: Mapping[str, float] | None = None,
        label: str = "",
    ) -> "DynamicEquation":
        m = len(sources)
        exprs = [parse_expression(s, m, constants) for s in sources]
        return cls(m, lambda t, q, v: [e(t, q, v) for e in exprs], label, tuple(map(str, exprs)))

    def __call__(self, t, q, v) -> list:
        return self.rhs(t, q, v)

    def at(self, p: JetPoint1) -> np.ndarray:
        _check_dim(self.m, p)
        return _to_array(self.rhs(p.t, list(p.q), list(p.v)), _sample_shape(p.t, *p.q, *p.v))


@dataclass(frozen=True)
class ReferenceFrame:
    """A connection on Q -> R, i.e. the velocity field ``Gamma^i(t, q)`` of an observer family."""

    m: int
    field: Callable[[object, Sequence], list]
    label: str = ""
    sources: tuple[str, ...] | None = None

    @classmethod
    def from_strings(
        cls,
        sources: Sequence[str],
        constants: Mapping[str, float] | None = None,
        label: str = "",
    ) -> "ReferenceFrame":
        m = len(sources)
        exprs = [parse_expression(s, m, constants) for s in sources]
        for e in exprs:
            if e.uses_velocity():
                raise ValueError(f"frame {label!r}: component {e} depends on velocities")
        return cls(m, lambda t, q: [e(t, q, ()) for e in exprs], label, tuple(map(str, exprs)))

    def __call__(self, t, q) -> list:
        return self.field(t, q)

    def at(self, t, q) -> np.ndarray:
        return _to_array(self.field(t, list(q)), _sample_shape(t, *q))


@dataclass(frozen=True)
class ConnectionComponents:
    """Pointwise components of a dynamic connection: ``g0[i] = gamma^i_0``, ``gk[i, k] = gamma^i_k``."""

    g0: np.ndarray
    gk: np.ndarray


FrameConnectionComponents = ConnectionComponents


@dataclass(frozen=True)
class DynamicConnection:
    """Connection on the affine jet bundle J^1Q -> Q.

    ``components(t, q, v)`` returns ``m`` rows of ``m + 1`` entries
    ``[gamma^i_0, gamma^i_1, ..., gamma^i_m]``.
    """

    m: int
    components: Callable[[object, Sequence, Sequence], list]
    label: str = ""

    @classmethod
    def from_strings(
        cls,
        rows: Sequence[Sequence[str]],
        constants: Mapping[str, float] | None = None,
        label: str = "",
    ) -> "DynamicConnection":
        m = len(rows)
        if any(len(r) != m + 1 for r in rows):
            raise ValueError(f"connection {label!r}: each row needs {m + 1} components")
        exprs = [[parse_expression(s, m, constants) for s in r] for r in rows]
        return cls(m, lambda t, q, v: [[e(t, q, v) for e in r] for r in exprs], label)

    def __call__(self, t, q, v) -> list:
        return self.components(t, q, v)

    def at(self, p: JetPoint1) -> ConnectionComponents:
        _check_dim(self.m, p)
        rows = self.components(p.t, list(p.q), list(p.v))
        flat = _to_array([c for r in rows for c in r], _sample_shape(p.t, *p.q, *p.v))
        flat = flat.reshape((self.m, self.m + 1) + flat.shape[1:])
        return ConnectionComponents(flat[:, 0], flat[:, 1:])


@dataclass(frozen=True)
class SecondOrderConnection:
    """Horizontal field ``d_t + chi^i d_i + xi^i dv_i`` on J^1Q."""

    m: int
    chi: Callable[[object, Sequence, Sequence], list]
    xi: Callable[[object, Sequence, Sequence], list]
    holonomic: bool = field(default=False)

    @classmethod
    def build(cls, m, chi, xi, box: SampleBox | None = None) -> "SecondOrderConnection":
        p = (box or SampleBox()).sample(m)
        dev = _to_array(chi(p.t, list(p.q), list(p.v)), _sample_shape(p.t, *p.q, *p.v)) - p.v
        return cls(m, chi, xi, bool(np.max(np.abs(dev)) <= 1e-12))


def zero_equation(m: int) -> DynamicEquation:
    return DynamicEquation(m, lambda t, q, v: [0.0] * m, "free", ("0",) * m)


def zero_frame(m: int) -> ReferenceFrame:
    return ReferenceFrame(m, lambda t, q: [0.0] * m, "rest", ("0",) * m)


# -- operations -----------------------------------------------------------


def relative_velocity(frame: ReferenceFrame, p: JetPoint1) -> np.ndarray:
    """Covariant differential of the frame: ``v^i - Gamma^i(t, q)``."""
    _check_dim(frame.m, p)
    return p.v - frame.at(p.t, p.q)


def total_time_derivative(frame: ReferenceFrame, t, q, v) -> tuple[list, list, list]:
    """``(Gamma, d_t Gamma, dGamma)`` with ``dGamma[i][j] = d_j Gamma^i``.

    ``d_t`` here is the total derivative ``d_t + v^j d_j`` along the velocity ``v``.
    """
    m = frame.m
    vals, dt, dq = [], [], []
    for val, grad, _h in chart_jets(frame.field, t, list(q), order=1):
        row = list(grad[1:])
        acc = grad[0]
        for j in range(m):
            acc = acc + v[j] * row[j]
        vals.append(val)
        dt.append(acc)
        dq.append(row)
    return vals, dt, dq


def frame_jet_prolongation(frame: ReferenceFrame, box: SampleBox | None = None) -> SecondOrderConnection:
    """Jet prolongation ``d_t + Gamma^i d_i + d_t Gamma^i dv_i`` of a frame."""

    def chi(t, q, v):
        return frame.field(t, q)

    def xi(t, q, v):
        return total_time_derivative(frame, t, q, v)[1]

    return SecondOrderConnection.build(frame.m, chi, xi, box)


def xi_from_gamma(gamma: DynamicConnection) -> DynamicEquation:
    """Dynamic equation ``xi^i = gamma^i_0 + v^j gamma^i_j`` of a dynamic connection."""
    m = gamma.m

    def rhs(t, q, v):
        out = []
        for row in gamma.components(t, q, v):
            acc = row[0]
            for j in range(m):
                acc = acc + v[j] * row[1 + j]
            out.append(acc)
        return out

    return DynamicEquation(m, rhs, f"xi[{gamma.label}]")


def gamma_from_xi(xi: DynamicEquation) -> DynamicConnection:
    """Symmetric dynamic connection of an equation.

    ``gamma^i_j = dv_j xi^i / 2`` and ``gamma^i_0 = xi^i - v^j gamma^i_j``; the
    velocity derivatives come from a first-order jet evaluation of ``xi``.
    """
    m = xi.m

    def components(t, q, v):
        vs = ad.seed(list(v), order=1)
        rows = []
        for y in xi.rhs(t, q, vs):
            val, g = ad.gradient(y, vs)
            gk = [0.5 * gj for gj in g]
            g0 = val
            for j in range(m):
                g0 = g0 - v[j] * gk[j]
            rows.append([g0] + gk)
        return rows

    return DynamicConnection(m, components, f"gamma[{xi.label}]")


@dataclass(frozen=True)
class TorsionTensor:
    """``matrix[k, i] = T^k_i`` at a point (extra trailing axes for batches)."""

    matrix: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.matrix))) if self.matrix.size else 0.0

    @property
    def symmetric(self) -> bool:
        return self.max_abs <= 1e-12


def torsion(gamma: DynamicConnection, p: JetPoint1) -> TorsionTensor:
    """``T^k_i = gamma^k_i - dv_i gamma^k_0 - v^j dv_i gamma^k_j``."""
    _check_dim(gamma.m, p)
    return TorsionTensor(_array_from_rows(_torsion_rows(gamma, p.t, list(p.q), list(p.v))))


def _torsion_rows(gamma: DynamicConnection, t, q, v):
    m = gamma.m
    vs = ad.seed(list(v), order=1)
    rows = gamma.components(t, q, vs)
    out = []
    for k in range(m):
        parts = [ad.gradient(c, vs) for c in rows[k]]
        row = []
        for i in range(m):
            val = parts[1 + i][0] - parts[0][1][i]
            for j in range(m):
                val = val - v[j] * parts[1 + j][1][i]
            row.append(val)
        out.append(row)
    return out


def _array_from_rows(rows) -> np.ndarray:
    flat = [ad.primal(c) for r in rows for c in r]
    n_cols = len(rows[0]) if rows else 0
    arr = _to_array(flat) if flat else np.zeros(0)
    return arr.reshape((len(rows), n_cols) + arr.shape[1:])


@dataclass(frozen=True)
class CurvatureTensor:
    """``R[i, lam, mu] = R^i_{lam mu}``, lam/mu = 0 (time), 1..m (positions)."""

    R: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.R))) if self.R.size else 0.0


def curvature(gamma: DynamicConnection, p: JetPoint1) -> CurvatureTensor:
    """Curvature of a dynamic connection.

    ``R^i_{lm} = d_l gamma^i_m - d_m gamma^i_l + gamma^j_l dv_j gamma^i_m - gamma^j_m dv_j gamma^i_l``
    with ``d_0 = d_t``.  Only ``l < m`` is computed; the lower triangle is
    filled by negation, so antisymmetry holds exactly.
    """
    _check_dim(gamma.m, p)
    m = gamma.m
    xs = ad.seed([p.t, *p.q, *p.v], order=1)
    rows = gamma.components(xs[0], xs[1 : 1 + m], xs[1 + m :])
    parts = [[ad.gradient(c, xs) for c in r] for r in rows]
    val = [[ad.primal(c[0]) for c in r] for r in parts]
    shape = _sample_shape(p.t, *p.q, *p.v)
    R = np.zeros((m, m + 1, m + 1) + shape)
    for i in range(m):
        for lam in range(m + 1):
            for mu in range(lam + 1, m + 1):
                r = parts[i][mu][1][lam] - parts[i][lam][1][mu]
                for j in range(m):
                    r = r + val[j][lam] * parts[i][mu][1][1 + m + j]
                    r = r - val[j][mu] * parts[i][lam][1][1 + m + j]
                R[i, lam, mu] = r
                R[i, mu, lam] = -R[i, lam, mu]
    return CurvatureTensor(R)


def vertical_covariant_differential(gamma: DynamicConnection, p: JetPoint2) -> np.ndarray:
    """Residual ``a^i - gamma^i_0 - v^j gamma^i_j``; zero on the equation of ``gamma``."""
    _check_dim(gamma.m, p)
    return p.a - xi_from_gamma(gamma).at(p)


@dataclass(frozen=True)
class QuadraticFit:
    """``xi^i ~ b0[i] + b1[i, j] v^j + b2[i, j, k] v^j v^k`` at fixed ``(t, q)``."""

    b0: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    is_quadratic: bool
    max_remainder: float


def quadratic_coefficients(
    xi: DynamicEquation, t, q: Sequence, probes: int = 16, tol: float = 1e-9
) -> QuadraticFit:
    """Read off the velocity polynomial of ``xi`` at ``v = 0`` and probe the remainder.

    The equation counts as quadratic when the fit reproduces ``xi`` within
    ``tol`` at ``probes`` quasi-random velocities in [-2, 2]^m.  ``t`` and the
    entries of ``q`` may be arrays; coefficients then carry trailing axes.
    """
    m = xi.m
    t = np.asarray(t, dtype=float)
    q = [np.asarray(x, dtype=float) for x in q]
    shape = np.broadcast_shapes(t.shape, *(x.shape for x in q))
    vs = ad.seed([0.0] * m, order=2)
    b0 = np.zeros((m,) + shape)
    b1 = np.zeros((m, m) + shape)
    b2 = np.zeros((m, m, m) + shape)
    for i, y in enumerate(xi.rhs(t, q, vs)):
        val, g, H = ad.derivatives(y, vs)
        b0[i] = ad.primal(val)
        for j in range(m):
            b1[i, j] = ad.primal(g[j])
            for k in range(m):
                b2[i, j, k] = 0.5 * ad.primal(H[j][k])
    u = qmc.Sobol(m, scramble=True, seed=12345).random(probes).T
    v = (-2.0 + 4.0 * u).reshape((m,) + (1,) * len(shape) + (probes,))
    exact = xi.rhs(t[..., None], [x[..., None] for x in q], list(v))
    worst = 0.0
    for i in range(m):
        fit = b0[i][..., None]
        for j in range(m):
            fit = fit + b1[i, j][..., None] * v[j]
            for k in range(m):
                fit = fit + b2[i, j, k][..., None] * v[j] * v[k]
        worst = max(worst, float(np.max(np.abs(ad.primal(exact[i]) - fit))))
    return QuadraticFit(b0, b1, b2, worst <= tol, worst)
