import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from acpoisson import jets as J
from acpoisson.calculus import jacobi_residual, lie_bracket, wedge
from acpoisson.errors import CouplingDegeneracyError
from acpoisson.fields import ConstantField, FunctionField
from acpoisson.foliation import (
    Connection,
    FoliatedChart,
    almost_coupling_report,
    bigrade_bivector,
    bigrade_oneform,
    bigraded_component,
    coupling_form,
    coupling_form_field,
    curvature,
    curvature_identity_residual,
    d_bigraded,
    horizontal_lift,
    horizontal_vector_fields,
    induced_connection,
    is_coupling,
    poisson_connection_residual,
    sigma_as_twoform,
)

CHART = FoliatedChart(2, 2)
C1, C2, S0 = 0.7, -0.4, 3.0


def curved_connection():
    """Gamma^1_2 = c1 xi1, Gamma^2_2 = c2 xi1: curvature R^a_{12} = c_a."""
    return Connection.from_formula(CHART, lambda x: [[0.0, C1 * x[2]], [0.0, C2 * x[2]]], name="curved")


def coupling_fixture():
    """P + (1/s) h1 ^ h2 with s = s0 - (c1 x2 - c2 x1), a coupling structure."""
    def fn(x):
        s = S0 - (C1 * x[1] - C2 * x[0])
        h1 = [0.0, 0.0, 1.0, 0.0]
        h2 = [-C1 * x[2], -C2 * x[2], 0.0, 1.0]
        w = wedge(h1, h2)
        out = [[w[i][j] / s for j in range(4)] for i in range(4)]
        out[0][1] = out[0][1] + 1.0
        out[1][0] = out[1][0] - 1.0
        return out

    P = ConstantField("bivector", 4, [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
    return P, FunctionField("bivector", 4, fn, name="Pi_c")


@pytest.fixture
def pts(rng):
    return rng.uniform(-1, 1, (25, 4))


def test_frame_and_projector(pts):
    conn = curved_connection()
    e, ei = conn.frame_values(pts), conn.coframe_values(pts)
    np.testing.assert_allclose(e @ ei, np.broadcast_to(np.eye(4), e.shape), atol=1e-15)
    g = conn.projector_values(pts)
    assert conn.idempotence_residual(pts) < 1e-15
    h = conn.horizontal_values(pts)
    np.testing.assert_allclose(g @ h, 0.0, atol=1e-15)
    np.testing.assert_allclose(g[:, :, :2], np.broadcast_to(np.eye(4)[:, :2], (len(pts), 4, 2)), atol=1e-15)


def test_curvature_is_minus_vertical_bracket(pts):
    conn = curved_connection()
    r = curvature(conn, pts)
    h1, h2 = horizontal_vector_fields(conn)
    br = lie_bracket(h1, h2)(pts)
    np.testing.assert_allclose(r[:, :, 0, 1], -br[:, :2], atol=1e-14)
    np.testing.assert_allclose(r[:, :, 0, 1], np.broadcast_to([C1, C2], (len(pts), 2)), atol=1e-14)
    np.testing.assert_allclose(r, -np.swapaxes(r, -1, -2), atol=1e-15)


def test_flat_translation_has_zero_curvature(s1, pts):
    assert np.max(np.abs(curvature(s1.conn, pts))) < 1e-13


@settings(max_examples=25, deadline=None)
@given(pi=arrays(np.float64, (4, 4), elements=st.floats(-2, 2)),
       g=arrays(np.float64, (2, 2), elements=st.floats(-2, 2)))
def test_bigrading_roundtrip(pi, g):
    pi = pi - pi.T
    conn = Connection.constant(CHART, g)
    blocks = bigrade_bivector(ConstantField("bivector", 4, pi), conn, np.zeros((1, 4)))
    np.testing.assert_allclose(blocks.reassemble()[0], pi, atol=1e-12)
    total = sum(bigraded_component(ConstantField("bivector", 4, pi), conn, s)(np.zeros((1, 4))) for s in range(3))
    np.testing.assert_allclose(total[0], pi, atol=1e-12)


def test_oneform_split_annihilates_the_right_bundles(pts):
    conn = curved_connection()
    mu = FunctionField("oneform", 4, lambda x: [x[0] * x[3], J.sin(x[1]), x[2] ** 2, 1.0 + x[0]])
    m10, m01 = bigrade_oneform(mu, conn, pts)
    np.testing.assert_allclose(m10 + m01, mu(pts), atol=1e-15)
    np.testing.assert_allclose(m10[:, :2], 0.0, atol=1e-15)  # kills the leaves
    h = conn.horizontal_values(pts)
    np.testing.assert_allclose(np.einsum("zi,zij->zj", m01, h), 0.0, atol=1e-14)  # kills H


def test_coupling_fixture(pts):
    P, Pi = coupling_fixture()
    conn = curved_connection()
    assert jacobi_residual(Pi, pts) < 1e-12
    assert almost_coupling_report(Pi, conn, pts).is_almost_coupling
    rep = is_coupling(Pi, CHART, pts)
    assert rep.coupling
    np.testing.assert_allclose(rep.connection.gamma(pts), conn.gamma(pts), atol=1e-13)
    sig = coupling_form(Pi, conn, pts)
    s = S0 - (C1 * pts[:, 1] - C2 * pts[:, 0])
    np.testing.assert_allclose(sig[:, 0, 1], s, atol=1e-12)
    assert poisson_connection_residual(P, conn, pts) < 1e-14
    res = curvature_identity_residual(P, conn, coupling_form_field(Pi, conn), pts)
    assert res < 1e-12
    # the identity is sensitive: a wrong coupling form breaks it
    wrong = coupling_form_field(P + horizontal_lift(ConstantField("tensor", 4, [[0, 1], [-1, 0]]), conn), conn)
    assert curvature_identity_residual(P, conn, wrong, pts) > 0.1


def test_coupling_detects_degeneracy(s1, pts):
    assert not is_coupling(s1.P, s1.chart, pts).coupling
    with pytest.raises(CouplingDegeneracyError):
        coupling_form(s1.P, s1.conn, pts)


def test_induced_connection_recovers_gamma(s3, pts):
    pe = s3.family.eval(0.05)
    conn = induced_connection(pe, s3.chart)
    np.testing.assert_allclose(conn.gamma(pts), s3.conn.gamma(pts), atol=1e-12)


def test_mixed_block_detected(pts):
    conn = curved_connection()
    Pi = ConstantField("bivector", 4, [[0, 1, 0.3, 0], [-1, 0, 0, 0], [-0.3, 0, 0, 0], [0, 0, 0, 0]])
    rep = almost_coupling_report(Pi, conn, pts)
    assert not rep.is_almost_coupling and rep.sup_mixed > 0.1


def test_d10_against_symbolic_horizontal_derivatives(rng):
    """n_h = 3: the (3,0) part of d sigma is the cyclic sum of h_i sigma_jk."""
    chart = FoliatedChart(2, 3)
    q = sp.symbols("q0:5")
    gam = [[0.2 * q[4], 0.1, 0.3 * q[3]], [0, -0.2 * q[2], 0.4]]
    sig_sym = [[0, q[0] * q[3], sp.sin(q[1]) + q[2]], [0, 0, q[4] * q[0] ** 2], [0, 0, 0]]
    sig_sym = [[sig_sym[i][j] - sig_sym[j][i] for j in range(3)] for i in range(3)]

    def h(i, f):
        return sp.diff(f, q[2 + i]) - sum(gam[a][i] * sp.diff(f, q[a]) for a in range(2))

    cyc = h(0, sig_sym[1][2]) + h(1, sig_sym[2][0]) + h(2, sig_sym[0][1])
    cyc_fn = sp.lambdify(q, cyc, "numpy")
    conn = Connection.from_formula(chart, lambda x: [[0.2 * x[4], 0.1, 0.3 * x[3]], [0.0, -0.2 * x[2], 0.4]])

    def sig(x):
        m = [[0.0, x[0] * x[3], J.sin(x[1]) + x[2]], [0.0, 0.0, x[4] * x[0] ** 2], [0.0, 0.0, 0.0]]
        return [[m[i][j] - m[j][i] for j in range(3)] for i in range(3)]

    sigma = FunctionField("tensor", 5, sig, shape=(3, 3))
    form = sigma_as_twoform(sigma, chart)
    p = rng.uniform(-1, 1, (8, 5))
    d10 = d_bigraded(form, conn, (1, 0))(p)
    # a (3,0)-form is a multiple of dxi1 ^ dxi2 ^ dxi3
    np.testing.assert_allclose(d10[:, 2, 3, 4], cyc_fn(*p.T), atol=1e-12)
    mask = np.ones((5, 5, 5), bool)
    for perm in [(2, 3, 4), (2, 4, 3), (3, 2, 4), (3, 4, 2), (4, 2, 3), (4, 3, 2)]:
        mask[perm] = False
    assert np.max(np.abs(d10[:, mask])) < 1e-12
    # d_{1,0} + d_{0,1} + d_{2,-1} = d
    from acpoisson.calculus import exterior_derivative

    full = sum(d_bigraded(form, conn, s)(p) for s in [(1, 0), (0, 1), (2, -1)])
    np.testing.assert_allclose(full, exterior_derivative(form)(p), atol=1e-12)


def test_invalid_selector():
    with pytest.raises(ValueError):
        d_bigraded(ConstantField("oneform", 4, 0.0), Connection.zero(CHART), (3, 0))
