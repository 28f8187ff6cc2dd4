import numpy as np
import pytest

from acpoisson import jets as J
from acpoisson.averaging import (
    TorusAction,
    average_connection,
    averaged_dirac,
    averaged_poisson_field,
    dirac_invariance_residual,
    group_samples,
    haar_average,
    invariance_residual,
    moment_theta,
    q_form,
    verify_compatibility,
)
from acpoisson.calculus import exterior_derivative, jacobi_residual
from acpoisson.dirac import DiracField, DiracSubspace, graph_of_poisson, max_principal_angle
from acpoisson.errors import GaugeDegeneracyError
from acpoisson.fields import ConstantField, FunctionField


@pytest.fixture
def pts(rng):
    return rng.uniform(-1, 1, (12, 4))


def test_rotation_action_structure(pts):
    act = TorusAction.rotations(4, [(0, 1), (2, 3)], [1.0, 2.0])
    assert act.group_law_residual(pts) < 1e-13
    assert act.generator_residual(pts) < 1e-8
    img = act.flow(np.array([[np.pi / 2, 0.0]]), pts[:1])
    np.testing.assert_allclose(img[0], [-pts[0, 1], pts[0, 0], pts[0, 2], pts[0, 3]], atol=1e-15)
    with pytest.raises(ValueError):
        TorusAction.rotations(4, [(0, 1), (1, 2)])


def test_haar_average_closed_form(pts):
    act = TorusAction.rotations(4, [(0, 1)])
    f = FunctionField("scalar", 4, lambda x: x[0] ** 2 + x[0] * x[1] + x[2])
    avg = haar_average(act, f, nodes=16)
    np.testing.assert_allclose(avg(pts), 0.5 * (pts[:, 0] ** 2 + pts[:, 1] ** 2) + pts[:, 2], atol=1e-14)
    assert invariance_residual(act, avg, pts, group_samples(1)) < 1e-13
    np.testing.assert_allclose(haar_average(act, avg, nodes=16)(pts), avg(pts), atol=1e-14)
    # derivatives propagate through the average
    np.testing.assert_allclose(avg.jet(pts, 1).g[0], pts[:, 0], atol=1e-14)


def test_average_of_oneform_is_invariant(pts):
    act = TorusAction.rotations(4, [(0, 1)])
    a = FunctionField("oneform", 4, lambda x: [x[1] ** 2, J.sin(x[0]), x[0] * x[3], 1.0])
    avg = haar_average(act, a, nodes=64)
    assert invariance_residual(act, avg, pts, group_samples(1)) < 1e-12


def test_s1_compatibility_and_s4_violation(s1, s4, pts):
    assert verify_compatibility(s1.action, s1.P, s1.compat, pts).passed
    p5 = np.random.default_rng(1).uniform(-1, 1, (10, 5))
    rep = verify_compatibility(s4.action, s4.P, s4.compat, p5)
    assert not rep.passed and rep.generator_residual > 1e-3


def test_q_closed_form_and_schemes_agree(s1, pts):
    Q = s1.Q()
    b = s1.conn.gamma(pts)
    jx = np.stack([-pts[:, 1], pts[:, 0]], axis=-1)
    expected = np.einsum("za,zai->zi", jx, b)
    q = Q(pts)
    np.testing.assert_allclose(q[:, :2], 0.0, atol=1e-15)
    np.testing.assert_allclose(q[:, 2:], expected, atol=1e-12)
    ray = q_form(s1.action, s1.compat, s1.conn, 64, 32, "ray")
    np.testing.assert_allclose(ray(pts), q, atol=1e-12)


def test_q_vanishes_for_trivial_connection(product, pts):
    assert np.max(np.abs(product.Q()(pts))) < 1e-15


def test_averaged_bivector_properties(s1, pts):
    Q = s1.Q()
    pe = s1.family.eval(0.05)
    avg = averaged_poisson_field(pe, Q)
    assert jacobi_residual(avg, pts) < 1e-8
    assert invariance_residual(s1.action, avg, pts, group_samples(1)) < 1e-7
    np.testing.assert_allclose(averaged_poisson_field(s1.P, Q)(pts), s1.P(pts), atol=1e-12)
    # independent route: gauge the graph by -d Theta and extract
    theta = moment_theta(s1.action, s1.compat, s1.conn, part=0)
    d = averaged_dirac(DiracField.graph(pe), theta)
    for bas, pb in zip(d.bases(pts), avg(pts)):
        assert max_principal_angle(bas, graph_of_poisson(pb).basis) < 1e-9
    assert dirac_invariance_residual(s1.action, d, pts[:4], group_samples(1, 3)) < 1e-7


def test_dtheta_matches_dq(s1, pts):
    dq = exterior_derivative(s1.Q())(pts)
    theta = moment_theta(s1.action, s1.compat, s1.conn, part=0)
    np.testing.assert_allclose(exterior_derivative(theta)(pts), dq, atol=1e-8)
    # Q is -Theta(mu_{1,0}) on the transverse slots
    full = moment_theta(s1.action, s1.compat, s1.conn, part=1)
    np.testing.assert_allclose(-exterior_derivative(full)(pts), dq, atol=1e-12)


def test_average_connection_for_rotation(s1, pts):
    aconn = average_connection(s1.action, s1.conn, 64, check_points=pts)
    assert aconn.idempotence_residual(pts) < 1e-12
    # the rotation turns the vertical part of Gamma, whose average vanishes
    np.testing.assert_allclose(aconn.gamma(pts), 0.0, atol=1e-13)


def test_gauge_degeneracy_is_raised():
    P = ConstantField("bivector", 2, [[0, 1], [-1, 0]])
    # dQ P = -I at every point: I + dQ P = 0
    Q = FunctionField("oneform", 2, lambda x: [-0.5 * x[1], 0.5 * x[0]])
    with pytest.raises(GaugeDegeneracyError):
        averaged_poisson_field(P, Q)(np.array([[0.1, 0.2]]))


def test_dirac_pullback_identity():
    d = DiracSubspace(np.vstack([np.eye(2), np.zeros((2, 2))]))
    assert max_principal_angle(d.pullback(np.eye(2)).basis, d.basis) < 1e-15
