"""Fixed-step RK4 trajectories of dynamic equations and their verification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bundle import CoordinateChange, JetPoint1, JetPoint2, prolong_jet2
from .connections import DynamicEquation, ReferenceFrame, _to_array
from .frames import frame_jets

__all__ = [
    "Trajectory",
    "integrate",
    "integrate_frame",
    "trajectory_residual",
    "pushforward_trajectory",
]


@dataclass(frozen=True)
class Trajectory:
    """Samples on a uniform time grid; ``q``, ``v``, ``a`` have shape ``(n, m)``."""

    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    a: np.ndarray
    step: float
    tag: str = ""
    diverged: bool = False

    def __len__(self) -> int:
        return len(self.t)

    @property
    def m(self) -> int:
        return self.q.shape[1]

    def sample(self, k: int) -> JetPoint2:
        return JetPoint2(self.t[k], self.q[k], self.v[k], self.a[k])

    def as_point(self) -> JetPoint2:
        """All samples as one vectorised jet point (arrays of shape ``(m, n)``)."""
        return JetPoint2(self.t, self.q.T, self.v.T, self.a.T)


def _grid(t0: float, t_end: float, step: float) -> tuple[int, float]:
    if not step > 0:
        raise ValueError("step must be positive")
    if not t_end > t0:
        raise ValueError("t_end must exceed the initial time")
    n = max(1, math.ceil((t_end - t0) / step - 1e-9))
    return n, (t_end - t0) / n


def integrate(xi: DynamicEquation, p0: JetPoint1, t_end: float, step: float) -> Trajectory:
    """Classic RK4 on ``q' = v, v' = xi(t, q, v)``.

    The step is shrunk to ``(t_end - t0) / n`` with ``n = ceil((t_end - t0) / step)``
    so the grid ends exactly at ``t_end``.  A non-finite state stops the run and
    returns the samples so far with ``diverged`` set.
    """
    n, h = _grid(float(p0.t), float(t_end), float(step))
    m = xi.m

    def f(t, q, v):
        # overflow is reported through the divergence flag instead
        with np.errstate(over="ignore", invalid="ignore"):
            return np.array(xi.rhs(t, list(q), list(v)), dtype=float).reshape(m)

    t0 = float(p0.t)
    q = np.array(p0.q, dtype=float)
    v = np.array(p0.v, dtype=float)
    ts, qs, vs, accs = [t0], [q], [v], [f(t0, q, v)]
    diverged = False
    for k in range(n):
        t = t0 + k * h
        k1q, k1v = v, accs[-1]
        k2q = v + 0.5 * h * k1v
        k2v = f(t + 0.5 * h, q + 0.5 * h * k1q, k2q)
        k3q = v + 0.5 * h * k2v
        k3v = f(t + 0.5 * h, q + 0.5 * h * k2q, k3q)
        k4q = v + h * k3v
        k4v = f(t + h, q + h * k3q, k4q)
        q = q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        t_next = t0 + (k + 1) * h
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            diverged = True
            break
        a = f(t_next, q, v)
        if not np.all(np.isfinite(a)):
            diverged = True
            break
        ts.append(t_next)
        qs.append(q)
        vs.append(v)
        accs.append(a)
    return Trajectory(np.array(ts), np.array(qs), np.array(vs), np.array(accs), h, xi.label, diverged)


def integrate_frame(frame: ReferenceFrame, t0: float, q0, t_end: float, step: float) -> Trajectory:
    """Integral curve of a frame (``q' = Gamma(t, q)``) by RK4.

    Velocities are ``Gamma`` along the curve; accelerations are left as the
    total derivative ``d_t Gamma`` of the frame along its own flow.
    """
    n, h = _grid(float(t0), float(t_end), float(step))

    def g(t, q):
        return np.array(frame.field(t, list(q)), dtype=float).reshape(frame.m)

    q = np.array(q0, dtype=float)
    ts, qs = [float(t0)], [q]
    for k in range(n):
        t = t0 + k * h
        k1 = g(t, q)
        k2 = g(t + 0.5 * h, q + 0.5 * h * k1)
        k3 = g(t + 0.5 * h, q + 0.5 * h * k2)
        k4 = g(t + h, q + h * k3)
        q = q + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ts.append(t0 + (k + 1) * h)
        qs.append(q)
    t = np.array(ts)
    Q = np.array(qs)
    gam, dt, dq = frame_jets(frame, t, list(Q.T))
    V = _to_array(gam)
    A = []
    for i in range(frame.m):
        acc = dt[i]
        for j in range(frame.m):
            acc = acc + gam[j] * dq[i][j]
        A.append(acc)
    A = _to_array(A)
    shape = (frame.m, len(t))
    return Trajectory(t, Q, np.broadcast_to(V, shape).T.copy(), np.broadcast_to(A, shape).T.copy(), h, frame.label)


def trajectory_residual(xi: DynamicEquation, tr: Trajectory) -> float:
    """Max over interior samples of ``|(q[k+1] - 2 q[k] + q[k-1]) / h^2 - xi(t_k, q_k, v_k)|``."""
    if len(tr) < 3:
        raise ValueError("need at least three samples")
    h = tr.step
    fd = (tr.q[2:] - 2.0 * tr.q[1:-1] + tr.q[:-2]) / (h * h)
    inner = JetPoint1(tr.t[1:-1], tr.q[1:-1].T, tr.v[1:-1].T)
    rhs = np.broadcast_to(xi.at(inner), (xi.m, len(tr) - 2)).T
    return float(np.max(np.abs(fd - rhs)))


def pushforward_trajectory(phi: CoordinateChange, tr: Trajectory) -> Trajectory:
    """Samplewise second-order prolongation of ``phi``."""
    p = prolong_jet2(phi, tr.as_point())
    n = len(tr)
    shape = (phi.m, n)
    return Trajectory(
        np.broadcast_to(np.asarray(p.t, dtype=float), (n,)).copy(),
        np.broadcast_to(p.q, shape).T.copy(),
        np.broadcast_to(p.v, shape).T.copy(),
        np.broadcast_to(p.a, shape).T.copy(),
        tr.step,
        f"{tr.tag}@{phi.name or 'chart'}",
        tr.diverged,
    )
