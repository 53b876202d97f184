import numpy as np
import pytest
from conftest import random_points, rotating_frame

from relmech import (
    DynamicConnection,
    DynamicEquation,
    JetPoint1,
    JetPoint2,
    ReferenceFrame,
    SecondOrderConnection,
    ad,
    curvature,
    frame_jet_prolongation,
    gamma_from_xi,
    quadratic_coefficients,
    relative_velocity,
    torsion,
    vertical_covariant_differential,
    xi_from_gamma,
    zero_equation,
    zero_frame,
)

P0 = JetPoint1(0.0, [1.0, 0.0], [0.0, 0.0])

SAMPLE_EQUATIONS = [
    ["0", "0"],
    ["2*v2 + q1", "-2*v1 + q2"],
    ["sin(q1)*v2^2 - t*v1", "exp(-q2^2)*cos(v1) + q1*q2"],
    ["v1*v2*v2 + log(2 + sin(t))", "sqrt(1 + q1^2 + v2^2)"],
]


def eq(rows, label=""):
    return DynamicEquation.from_strings(rows, label=label)


# -- relative velocity and frame prolongation -----------------------------


def test_relative_velocity_at_rest_frame():
    np.testing.assert_array_equal(relative_velocity(zero_frame(2), JetPoint1(0.0, [0, 0], [5.0, 2.0])), [5.0, 2.0])


def test_relative_velocity_rotating():
    np.testing.assert_allclose(relative_velocity(rotating_frame(), P0), [0.0, -1.0])


def test_relative_velocity_comoving():
    frame = ReferenceFrame.from_strings(["0.5", "-1.5"])
    np.testing.assert_array_equal(relative_velocity(frame, JetPoint1(1.0, [3.0, 4.0], [0.5, -1.5])), [0.0, 0.0])


def test_frame_must_not_depend_on_velocity():
    with pytest.raises(ValueError):
        ReferenceFrame.from_strings(["v1"])


@pytest.mark.parametrize(
    "field, xi_expected",
    [
        (["0", "0"], lambda p: [np.zeros_like(p.t), np.zeros_like(p.t)]),
        (["-q2", "q1"], lambda p: [-p.v[1], p.v[0]]),
        (["t", "0"], lambda p: [np.ones_like(p.t), np.zeros_like(p.t)]),
    ],
)
def test_frame_jet_prolongation(field, xi_expected):
    frame = ReferenceFrame.from_strings(field)
    so = frame_jet_prolongation(frame)
    p = random_points(2, 50)
    chi = [np.broadcast_to(c, p.t.shape) for c in so.chi(p.t, list(p.q), list(p.v))]
    np.testing.assert_allclose(chi, frame.at(p.t, p.q))
    xi = [np.broadcast_to(x, p.t.shape) for x in so.xi(p.t, list(p.q), list(p.v))]
    np.testing.assert_allclose(xi, xi_expected(p), atol=1e-15)
    assert so.holonomic is False


def test_holonomic_detection():
    so = SecondOrderConnection.build(1, lambda t, q, v: list(v), lambda t, q, v: [0.0])
    assert so.holonomic


# -- equation <-> connection ------------------------------------------------


def test_zero_connection_gives_zero_equation():
    gamma = DynamicConnection.from_strings([["0", "0", "0"], ["0", "0", "0"]])
    np.testing.assert_array_equal(xi_from_gamma(gamma).at(P0), [0.0, 0.0])


def test_uniform_force():
    gamma = DynamicConnection.from_strings([["-9.81", "0"]])
    np.testing.assert_array_equal(xi_from_gamma(gamma).at(JetPoint1(0.0, [3.0], [2.0])), [-9.81])


def test_gamma_of_zero_equation():
    c = gamma_from_xi(zero_equation(2)).at(random_points(2, 10))
    assert np.all(c.g0 == 0) and np.all(c.gk == 0)


def test_gamma_of_rotating_free_particle():
    xi = eq(["2*v2 + q1", "-2*v1 + q2"])
    p = random_points(2, 20)
    c = gamma_from_xi(xi).at(p)
    np.testing.assert_allclose(c.gk[0, 1], 1.0)
    np.testing.assert_allclose(c.gk[1, 0], -1.0)
    np.testing.assert_allclose(c.gk[0, 0], 0.0)
    np.testing.assert_allclose(c.gk[1, 1], 0.0)
    # gamma^i_0 = xi^i - v^j dv_j xi^i / 2
    np.testing.assert_allclose(c.g0, [p.q[0] + p.v[1], p.q[1] - p.v[0]], atol=1e-15)


def test_gamma_of_velocity_square():
    p = JetPoint1(0.0, [0.3], [1.7])
    c = gamma_from_xi(eq(["v1^2"])).at(p)
    assert c.gk[0, 0] == pytest.approx(1.7)
    assert c.g0[0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("rows", SAMPLE_EQUATIONS)
def test_round_trip(rows):
    xi = eq(rows)
    p = random_points(2, 300, seed=5)
    np.testing.assert_allclose(xi_from_gamma(gamma_from_xi(xi)).at(p), xi.at(p), atol=1e-12, rtol=0)


@pytest.mark.parametrize("rows", SAMPLE_EQUATIONS)
def test_constructed_connection_is_torsion_free(rows):
    assert torsion(gamma_from_xi(eq(rows)), random_points(2, 300, seed=6)).max_abs <= 1e-12


def test_torsion_of_simple_connection():
    gamma = DynamicConnection.from_strings([["0", "q1"]])
    p = random_points(1, 20)
    np.testing.assert_allclose(torsion(gamma, p).matrix[0, 0], p.q[0])


def test_affine_symmetric_connection_is_torsion_free():
    # gamma^i_lam = G[i][lam][0] + G[i][lam][j] v^j with G symmetric in the lower pair
    rows = [
        ["1 + 0.5*v1 - v2", "0.5 + 2*v1 + 3*v2", "-1 + 3*v1 - v2"],
        ["q1 + t*v1 + 2*v2", "t + 0.1*v1", "2 + 0.2*v2"],
    ]
    gamma = DynamicConnection.from_strings(rows)
    assert torsion(gamma, random_points(2, 64)).max_abs <= 1e-12


def test_symmetrisation_of_torsionful_connection():
    gamma = DynamicConnection.from_strings([["q1*v1^2", "sin(q1)*v1", "t"], ["v1*v2", "q2", "exp(v1)"]])
    p = random_points(2, 100, seed=9)
    got = gamma_from_xi(xi_from_gamma(gamma)).at(p).gk
    # expected: (gamma^k_i + dv_i gamma^k_0 + v^j dv_i gamma^k_j) / 2
    xs = ad.seed(list(p.v), order=1)
    rows = gamma.components(p.t, list(p.q), xs)
    want = np.zeros_like(got)
    for k in range(2):
        for i in range(2):
            g = [ad.gradient(c, xs) for c in rows[k]]
            acc = g[1 + i][0] + g[0][1][i]
            for j in range(2):
                acc = acc + p.v[j] * g[1 + j][1][i]
            want[k, i] = 0.5 * acc
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_quadratic_equation_gives_connection_affine_in_velocity():
    xi = eq(["q1*v1^2 - t*v1*v2 + sin(q2)", "v2^2 + q1*v1"])
    gamma = gamma_from_xi(xi)
    p = random_points(2, 40)
    vs = ad.seed(list(p.v), order=2)
    for row in gamma.components(p.t, list(p.q), vs):
        for c in row:
            _, _, H = ad.derivatives(c, vs)
            assert np.max(np.abs(np.array(H, dtype=float))) <= 1e-12


# -- curvature ---------------------------------------------------------------


def test_zero_connection_is_flat():
    gamma = DynamicConnection.from_strings([["0", "0"]])
    assert curvature(gamma, random_points(1, 10)).max_abs == 0.0


def _fd_curvature_1d(g0, g1, t, q, v, h=1e-5):
    """Curvature R^1_{01} of a one-dimensional connection by central differences."""

    def d(f, k):
        x = [t, q, v]
        xp, xm = list(x), list(x)
        xp[k] += h
        xm[k] -= h
        return (f(*xp) - f(*xm)) / (2 * h)

    return d(g1, 0) - d(g0, 1) + g0(t, q, v) * d(g1, 2) - g1(t, q, v) * d(g0, 2)


@pytest.mark.parametrize(
    "src0, src1, f0, f1",
    [
        ("q1*v1", "0", lambda t, q, v: q * v, lambda t, q, v: 0.0),
        ("sin(t)*q1^2", "v1*q1", lambda t, q, v: np.sin(t) * q * q, lambda t, q, v: v * q),
        ("exp(v1)", "t*v1^2", lambda t, q, v: np.exp(v), lambda t, q, v: t * v * v),
    ],
)
def test_curvature_against_differences(src0, src1, f0, f1):
    gamma = DynamicConnection.from_strings([[src0, src1]])
    rng = np.random.default_rng(4)
    for _ in range(20):
        t, q, v = rng.uniform(0, 2), rng.uniform(-2, 2), rng.uniform(-1, 1)
        R = curvature(gamma, JetPoint1(t, [q], [v])).R
        fd = _fd_curvature_1d(f0, f1, t, q, v)
        assert abs(R[0, 0, 1] - fd) <= 1e-6 * max(abs(fd), 1.0)


def test_curvature_example_is_nonzero():
    gamma = DynamicConnection.from_strings([["q1*v1", "0"]])
    p = JetPoint1(0.5, [1.0], [2.0])
    assert curvature(gamma, p).R[0, 0, 1] == pytest.approx(-2.0)


def test_curvature_is_antisymmetric_exactly():
    xi = eq(["sin(q1*v2) + t*v1^3", "q1*q2*v1"])
    R = curvature(gamma_from_xi(xi), random_points(2, 64)).R
    np.testing.assert_array_equal(R, -np.swapaxes(R, 1, 2))


def test_harmonic_oscillator_is_curved():
    R = curvature(gamma_from_xi(eq(["-q1"])), random_points(1, 20)).R
    np.testing.assert_allclose(np.abs(R[0, 0, 1]), 1.0)


# -- covariant differential ------------------------------------------------


def test_vertical_covariant_differential():
    gamma = DynamicConnection.from_strings([["0", "0"]])
    assert vertical_covariant_differential(gamma, JetPoint2(0.0, [1.0], [1.0], [0.0]))[0] == 0.0
    assert vertical_covariant_differential(gamma, JetPoint2(0.0, [1.0], [1.0], [3.0]))[0] == 3.0


@pytest.mark.parametrize("rows", SAMPLE_EQUATIONS)
def test_vertical_covariant_differential_vanishes_on_solutions(rows):
    xi = eq(rows)
    p = random_points(2, 100)
    p2 = JetPoint2(p.t, p.q, p.v, xi.at(p))
    assert np.max(np.abs(vertical_covariant_differential(gamma_from_xi(xi), p2))) <= 1e-12


# -- quadratic fit -----------------------------------------------------------


def test_quadratic_fit_of_zero():
    fit = quadratic_coefficients(zero_equation(2), 0.0, [0.0, 0.0])
    assert fit.is_quadratic
    assert not fit.b0.any() and not fit.b1.any() and not fit.b2.any()


def test_quadratic_fit_of_rotating_particle():
    fit = quadratic_coefficients(eq(["2*v2 + q1", "-2*v1 + q2"]), 0.3, [0.7, -0.4])
    assert fit.is_quadratic
    assert fit.b0[0] == pytest.approx(0.7)
    assert fit.b1[0, 1] == pytest.approx(2.0)
    assert not fit.b2.any()


def test_quadratic_fit_reads_b2():
    fit = quadratic_coefficients(eq(["3*v1*v2 - v1^2", "0"]), 0.0, [0.0, 0.0])
    assert fit.b2[0, 0, 1] + fit.b2[0, 1, 0] == pytest.approx(3.0)
    assert fit.b2[0, 0, 0] == pytest.approx(-1.0)


def test_non_quadratic_detected():
    fit = quadratic_coefficients(eq(["sin(v1)"]), 0.0, [0.0])
    assert not fit.is_quadratic
    assert fit.max_remainder > 1e-3


def test_quadratic_fit_on_batches():
    p = random_points(2, 30)
    fit = quadratic_coefficients(eq(["q1*v1^2", "t"]), p.t, list(p.q))
    assert fit.is_quadratic
    np.testing.assert_allclose(fit.b2[0, 0, 0], p.q[0])
