"""Frame-relative mechanics: transformation law, adapted charts, geodesic and
inertial frames, free motion, frame connections and relative accelerations.

Notation in comments: ``Gamma`` is a reference frame, ``gamma`` a dynamic
connection, ``w = v - Gamma`` the relative velocity, and ``X o Gamma`` means
``X`` evaluated with the velocity slot set to ``Gamma(t, q)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import ad
from .bundle import (
    ChartError,
    CoordinateChange,
    JetPoint1,
    JetPoint2,
    SampleBox,
    _prolong1,
    _prolong2,
    chart_jets,
)
from .connections import (
    DynamicConnection,
    DynamicEquation,
    ReferenceFrame,
    _check_dim,
    _sample_shape,
    _to_array,
    curvature,
    gamma_from_xi,
    quadratic_coefficients,
    vertical_covariant_differential,
    xi_from_gamma,
)

__all__ = [
    "FrameConsistencyError",
    "NotQuadraticError",
    "CoriolisReport",
    "FreeMotionReport",
    "frame_jets",
    "transform_dynamic_equation",
    "transform_frame",
    "frame_of_adapted_chart",
    "adapted_frame_residual",
    "geodesic_residual",
    "tilde_gamma",
    "frame_connection",
    "xi_frame",
    "relative_acceleration",
    "relative_acceleration_field",
    "covariant_residual",
    "covariant_residual_relative",
    "coriolis_decomposition",
    "free_motion_equation",
    "free_motion_curvature_test",
    "galilei_chart",
    "FAILS",
    "INCONCLUSIVE_PASS",
]

FAILS = "fails necessary criterion"
INCONCLUSIVE_PASS = "passes necessary criterion (inconclusive)"


class FrameConsistencyError(ValueError):
    """A frame and a chart that should be adapted to it disagree."""


class NotQuadraticError(ValueError):
    """The Coriolis decomposition was requested for a non-quadratic equation."""


def frame_jets(frame: ReferenceFrame, t, q):
    """``(Gamma, d_t Gamma, dGamma)`` with partial time derivative and ``dGamma[i][j] = d_j Gamma^i``."""
    vals, dt, dq = [], [], []
    for val, grad, _h in chart_jets(frame.field, t, list(q), order=1):
        vals.append(val)
        dt.append(grad[0])
        dq.append(list(grad[1:]))
    return vals, dt, dq


def _total(dt, dq, v):
    # d_t Gamma^i = dt Gamma^i + v^j d_j Gamma^i
    out = []
    for i, row in enumerate(dq):
        acc = dt[i]
        for j, d in enumerate(row):
            acc = acc + v[j] * d
        out.append(acc)
    return out


# -- coordinate changes -------------------------------------------------------


def transform_dynamic_equation(xi: DynamicEquation, phi: CoordinateChange) -> DynamicEquation:
    """Express ``xi`` in the primed chart of ``phi``.

    The primed jet point is pulled back through the first prolongation of the
    inverse map, ``xi`` is evaluated there, and the acceleration is pushed
    forward with the second prolongation of the forward map.
    """
    if xi.m != phi.m:
        raise ValueError("equation and chart dimensions differ")
    c = phi.time_offset

    def rhs(tp, qp, vp):
        _, q, v = _prolong1(phi.inverse, tp, list(qp), list(vp))
        t = tp - c
        a = xi.rhs(t, q, v)
        return _prolong2(phi.forward, t, q, v, a)[2]

    name = phi.name or "chart"
    return DynamicEquation(xi.m, rhs, f"{xi.label}@{name}")


def transform_frame(frame: ReferenceFrame, phi: CoordinateChange) -> ReferenceFrame:
    """Components of a frame (a vector field with unit time part) in the primed chart."""
    c = phi.time_offset

    def field(tp, qp):
        q = phi.inverse(tp, list(qp))
        t = tp - c
        return _prolong1(phi.forward, t, q, frame.field(t, q))[2]

    return ReferenceFrame(frame.m, field, f"{frame.label}@{phi.name or 'chart'}")


def frame_of_adapted_chart(adapted: CoordinateChange) -> ReferenceFrame:
    """The frame that is ``d_t`` in the target chart of ``adapted`` (q -> q_bar).

    ``Gamma^i(t, q) = d/dt q^i(t, q_bar)`` at ``q_bar = adapted.forward(t, q)``.
    """
    c = adapted.time_offset

    def field(t, q):
        qb = adapted.forward(t, list(q))
        return [grad[0] for _v, grad, _h in chart_jets(adapted.inverse, t + c, qb, order=1)]

    return ReferenceFrame(adapted.m, field, f"frame[{adapted.name}]")


def adapted_frame_residual(
    frame: ReferenceFrame, phi: CoordinateChange, box: SampleBox | None = None
) -> float:
    """Max of ``|d_i qb^a Gamma^i + d_t qb^a|`` over the box for ``qb = phi.forward``.

    Zero certifies that ``(t, qb)`` are coordinates adapted to ``frame``.
    """
    p = (box or SampleBox()).sample(frame.m, with_velocity=False)
    t, q = p.t, list(p.q)
    gam = frame.field(t, q)
    worst = 0.0
    for _val, grad, _h in chart_jets(phi.forward, t, q, order=1):
        r = grad[0]
        for i in range(frame.m):
            r = r + grad[1 + i] * gam[i]
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


def geodesic_residual(xi: DynamicEquation, frame: ReferenceFrame, t, q) -> np.ndarray:
    """``dt Gamma^i + Gamma^j d_j Gamma^i - xi^i(t, q, Gamma)``; zero where ``Gamma`` is geodesic."""
    gam, dt, dq = frame_jets(frame, t, q)
    lhs = _total(dt, dq, gam)
    rhs = xi.rhs(t, list(q), gam)
    return _to_array([a - b for a, b in zip(lhs, rhs)])


# -- frame connections --------------------------------------------------------


def tilde_gamma(gamma: DynamicConnection, frame: ReferenceFrame) -> DynamicConnection:
    """``gamma~^i_k = gamma^i_k``, ``gamma~^i_0 = d_t Gamma^i - gamma^i_k Gamma^k``."""
    m = gamma.m

    def components(t, q, v):
        rows = gamma.components(t, q, v)
        gam, dt, dq = frame_jets(frame, t, q)
        dtot = _total(dt, dq, v)
        out = []
        for i in range(m):
            g0 = dtot[i]
            for k in range(m):
                g0 = g0 - rows[i][1 + k] * gam[k]
            out.append([g0] + list(rows[i][1:]))
        return out

    return DynamicConnection(m, components, f"tilde[{gamma.label},{frame.label}]")


def frame_connection(gamma: DynamicConnection, frame: ReferenceFrame) -> DynamicConnection:
    """Frame connection ``gamma~ + sigma`` (soldering-form correction of :func:`tilde_gamma`).

    ``gG^i_k = gamma^i_k + d_k Gamma^i - gamma^i_k o Gamma`` and
    ``gG^i_0 = d_t Gamma^i - gamma^i_k Gamma^k - Gamma^k (d_k Gamma^i - gamma^i_k o Gamma)``.
    """
    m = gamma.m

    def components(t, q, v):
        rows = gamma.components(t, q, v)
        gam, dt, dq = frame_jets(frame, t, q)
        on_frame = gamma.components(t, q, gam)
        dtot = _total(dt, dq, v)
        out = []
        for i in range(m):
            gk = []
            g0 = dtot[i]
            for k in range(m):
                nab = dq[i][k] - on_frame[i][1 + k]
                gk.append(rows[i][1 + k] + nab)
                g0 = g0 - rows[i][1 + k] * gam[k] - gam[k] * nab
            out.append([g0] + gk)
        return out

    return DynamicConnection(m, components, f"frame[{gamma.label},{frame.label}]")


def xi_frame(gamma: DynamicConnection, frame: ReferenceFrame) -> DynamicEquation:
    """Holonomic prolongation of a frame: ``d_t Gamma^i + (d_k Gamma^i + gamma^i_k - gamma^i_k o Gamma) w^k``."""
    m = gamma.m

    def rhs(t, q, v):
        rows = gamma.components(t, q, v)
        gam, dt, dq = frame_jets(frame, t, q)
        on_frame = gamma.components(t, q, gam)
        out = _total(dt, dq, v)
        for i in range(m):
            for k in range(m):
                out[i] = out[i] + (dq[i][k] + rows[i][1 + k] - on_frame[i][1 + k]) * (v[k] - gam[k])
        return out

    return DynamicEquation(m, rhs, f"xi[{frame.label}]")


def relative_acceleration_field(xi: DynamicEquation, frame: ReferenceFrame) -> DynamicEquation:
    """``a_Gamma = xi - xi_Gamma`` with ``gamma = gamma_xi``, as an evaluator on J^1Q."""
    xg = xi_frame(gamma_from_xi(xi), frame)

    def rhs(t, q, v):
        return [a - b for a, b in zip(xi.rhs(t, q, v), xg.rhs(t, q, v))]

    return DynamicEquation(xi.m, rhs, f"a[{xi.label},{frame.label}]")


def relative_acceleration(xi: DynamicEquation, frame: ReferenceFrame, p: JetPoint1) -> np.ndarray:
    _check_dim(xi.m, p)
    return relative_acceleration_field(xi, frame).at(p)


def covariant_residual(xi: DynamicEquation, frame: ReferenceFrame, p: JetPoint2) -> np.ndarray:
    """Covariant form of the equation: vertical covariant differential of the
    frame connection minus the relative acceleration.  Zero iff ``p`` solves ``xi``."""
    _check_dim(xi.m, p)
    gG = frame_connection(gamma_from_xi(xi), frame)
    return vertical_covariant_differential(gG, p) - relative_acceleration(xi, frame, p.first())


def covariant_residual_relative(xi: DynamicEquation, frame: ReferenceFrame, p: JetPoint2) -> np.ndarray:
    """Same residual written in relative velocities:
    ``d_t w^i - gG^i_k w^k - a_Gamma^i`` with ``d_t w^i = a^i - d_t Gamma^i``."""
    _check_dim(xi.m, p)
    m = xi.m
    t, q, v = p.t, list(p.q), list(p.v)
    gam, dt, dq = frame_jets(frame, t, q)
    dtot = _total(dt, dq, v)
    rows = frame_connection(gamma_from_xi(xi), frame).components(t, q, v)
    out = []
    for i in range(m):
        r = p.a[i] - dtot[i]
        for k in range(m):
            r = r - rows[i][1 + k] * (v[k] - gam[k])
        out.append(r)
    return _to_array(out) - relative_acceleration(xi, frame, p.first())


@dataclass(frozen=True)
class CoriolisReport:
    """Relative acceleration computed directly and from the Coriolis splitting.

    ``nabla[k, lam]`` is the covariant differential of the frame
    (``lam = 0`` is the time slot); ``rel_v`` is ``v - Gamma``.
    ``centrifugal`` is ``-Gamma^lam nabla_lam Gamma`` and ``coriolis`` is
    ``-2 w^lam nabla_lam Gamma``; they sum to ``a_decomposed``.
    """

    a_direct: np.ndarray
    a_decomposed: np.ndarray
    nabla: np.ndarray
    rel_v: np.ndarray
    centrifugal: np.ndarray
    coriolis: np.ndarray

    @property
    def max_discrepancy(self) -> float:
        return float(np.max(np.abs(self.a_direct - self.a_decomposed)))


def coriolis_decomposition(
    xi: DynamicEquation, frame: ReferenceFrame, p: JetPoint1, check: bool = True
) -> CoriolisReport:
    """Split the relative acceleration of a quadratic equation into
    ``-(Gamma^lam nabla_lam Gamma^i + 2 w^lam nabla_lam Gamma^i)`` with
    ``Gamma^0 = 1`` and ``w^0 = 0``, where ``nabla_lam Gamma^k = d_lam Gamma^k - gamma^k_lam o Gamma``.
    """
    _check_dim(xi.m, p)
    m = xi.m
    if check:
        fit = quadratic_coefficients(xi, p.t, p.q)
        if not fit.is_quadratic:
            raise NotQuadraticError(
                f"equation {xi.label!r} is not quadratic in velocities "
                f"(remainder {fit.max_remainder:.3g})"
            )
    t, q, v = p.t, list(p.q), list(p.v)
    gamma = gamma_from_xi(xi)
    gam, dt, dq = frame_jets(frame, t, q)
    on_frame = gamma.components(t, q, gam)
    nabla = [[dt[k] - on_frame[k][0]] + [dq[k][j] - on_frame[k][1 + j] for j in range(m)] for k in range(m)]
    w = [v[j] - gam[j] for j in range(m)]
    centrifugal, coriolis = [], []
    for i in range(m):
        c0 = nabla[i][0]
        c1 = 0.0
        for j in range(m):
            c0 = c0 + gam[j] * nabla[i][1 + j]
            c1 = c1 + 2.0 * w[j] * nabla[i][1 + j]
        centrifugal.append(-c0)
        coriolis.append(-c1)
    shape = _sample_shape(t, *q, *v)
    cf, co = _to_array(centrifugal, shape), _to_array(coriolis, shape)
    nab = _to_array([x for row in nabla for x in row], shape)
    nab = nab.reshape((m, m + 1) + nab.shape[1:])
    return CoriolisReport(
        a_direct=relative_acceleration(xi, frame, p),
        a_decomposed=cf + co,
        nabla=nab,
        rel_v=_to_array(w, shape),
        centrifugal=cf,
        coriolis=co,
    )


# -- free motion ----------------------------------------------------------------


def _is_affine(phi: CoordinateChange, box: SampleBox) -> bool:
    p = box.sample(phi.m, with_velocity=False)
    for _v, _g, H in chart_jets(phi.forward, p.t, list(p.q), order=2):
        for j in range(phi.m):
            for k in range(phi.m):
                if np.max(np.abs(H[1 + j][1 + k])) > 1e-12:
                    return False
    return True


def free_motion_equation(
    frame: ReferenceFrame, chart: CoordinateChange, box: SampleBox | None = None
) -> DynamicEquation:
    """Equation that reads ``qb_tt = 0`` in the frame's adapted chart, written in ``q``.

    ``chart`` maps the adapted coordinates ``qb`` to ``q``.  The right side is
    ``d_t Gamma^i + d_j Gamma^i w^j - (dq^i/dqb^a)(d_j d_k qb^a) w^j w^k``.
    When the chart is affine in ``qb`` the simplified form
    ``dt Gamma^i - Gamma^j d_j Gamma^i + 2 v^j d_j Gamma^i`` is returned after
    checking it against the general one on the box.
    """
    box = box or SampleBox()
    m = frame.m
    if chart.m != m:
        raise ValueError("frame and chart dimensions differ")
    res = adapted_frame_residual(frame, chart.inverse_change(), box)
    if not res <= 1e-8:
        raise FrameConsistencyError(
            f"chart {chart.name!r} is not adapted to frame {frame.label!r} (residual {res:.3g})"
        )
    c = chart.time_offset

    def general(t, q, v):
        gam, dt, dq = frame_jets(frame, t, q)
        w = [v[j] - gam[j] for j in range(m)]
        out = _total(dt, dq, v)
        for i in range(m):
            for j in range(m):
                out[i] = out[i] + dq[i][j] * w[j]
        inv = chart_jets(chart.inverse, t, list(q), order=2)
        qb = [val for val, _g, _h in inv]
        fwd = chart_jets(chart.forward, t - c, qb, order=1)
        for a in range(m):
            H = inv[a][2]
            quad = 0.0
            for j in range(m):
                for k in range(m):
                    quad = quad + H[1 + j][1 + k] * w[j] * w[k]
            for i in range(m):
                out[i] = out[i] - fwd[i][1][1 + a] * quad
        return out

    def affine(t, q, v):
        gam, dt, dq = frame_jets(frame, t, q)
        out = []
        for i in range(m):
            acc = dt[i]
            for j in range(m):
                acc = acc - gam[j] * dq[i][j] + 2.0 * v[j] * dq[i][j]
            out.append(acc)
        return out

    label = f"free[{frame.label}]"
    if not _is_affine(chart, box):
        return DynamicEquation(m, general, label)
    p = box.sample(m)
    gap = np.max(np.abs(_to_array(general(p.t, list(p.q), list(p.v))) - _to_array(affine(p.t, list(p.q), list(p.v)))))
    if not gap <= 1e-10:
        raise FrameConsistencyError(f"affine free-motion form disagrees with the general form by {gap:.3g}")
    return DynamicEquation(m, affine, label)


@dataclass(frozen=True)
class FreeMotionReport:
    max_curvature: float
    tolerance: float
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict == INCONCLUSIVE_PASS


def free_motion_curvature_test(
    xi: DynamicEquation, box: SampleBox | None = None, tol: float = 1e-8
) -> FreeMotionReport:
    """Necessary (never sufficient) test for free motion: flatness of ``gamma_xi``."""
    p = (box or SampleBox()).sample(xi.m)
    worst = curvature(gamma_from_xi(xi), p).max_abs
    return FreeMotionReport(worst, tol, FAILS if worst > tol else INCONCLUSIVE_PASS)


def galilei_chart(k: Sequence[Sequence[float]], u: Sequence[float], a: Sequence[float], box: SampleBox | None = None) -> CoordinateChange:
    """Galilei change ``qb^i = k^i_j q^j - u^i t - a^i`` with explicit affine inverse."""
    K = np.asarray(k, dtype=float)
    u = np.asarray(u, dtype=float)
    a = np.asarray(a, dtype=float)
    m = len(u)
    if K.shape != (m, m) or a.shape != (m,):
        raise ChartError("galilei chart: inconsistent shapes")
    if not abs(np.linalg.det(K)) > 1e-12:
        raise ChartError("galilei chart: singular linear part")
    Kinv = np.linalg.inv(K)
    kl, kil, ul, al = K.tolist(), Kinv.tolist(), u.tolist(), a.tolist()

    def forward(t, q):
        out = []
        for i in range(m):
            acc = -ul[i] * t - al[i]
            for j in range(m):
                acc = acc + kl[i][j] * q[j]
            out.append(acc)
        return out

    def inverse(t, qb):
        out = []
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc = acc + kil[i][j] * (qb[j] + ul[j] * t + al[j])
            out.append(acc)
        return out

    return CoordinateChange(m, forward, inverse, 0.0, "galilei", box or SampleBox(n=64))
