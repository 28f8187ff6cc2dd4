import numpy as np
import pytest

from acpoisson.averaging import averaged_poisson_field
from acpoisson.calculus import jacobi_residual
from acpoisson.deformation import (
    find_eps_max,
    first_order_cocycles,
    gauge_family,
    gauge_family_field,
    gauge_is_degenerate,
    homotopy_residual,
    integrate_isotopy,
    moser_field,
    moser_scaling,
    remainder_fit,
)
from acpoisson.errors import IntegrationError
from acpoisson.fields import ConstantField


@pytest.fixture(scope="module")
def pts(s1):
    return s1.sample(6, 3)


def test_family_at_zero_and_linear_in_eps(s1, pts):
    assert s1.family.eval(0.0) is s1.P
    d = (s1.family.eval(0.1)(pts) - s1.P(pts)) / 0.1
    np.testing.assert_allclose(d, s1.family.Lam(0.1)(pts), atol=1e-13)
    rep = s1.family.check((0.0, 0.05, 0.1), pts)
    assert rep["passed"]


def test_gauge_path_endpoints(s1, pts):
    Q = s1.Q()
    np.testing.assert_allclose(gauge_family(s1.family, Q, 0.05, 0.0, pts), s1.family.eval(0.05)(pts))
    np.testing.assert_allclose(gauge_family(s1.family, Q, 0.05, 1.0, pts),
                               averaged_poisson_field(s1.family.eval(0.05), Q)(pts), atol=1e-12)
    for t in (0.25, 0.75):
        assert jacobi_residual(gauge_family_field(s1.family, Q, 0.05, t), pts) < 1e-8


def test_moser_field_vanishes_when_it_should(s1, pts):
    Q = s1.Q()
    assert np.max(np.abs(moser_field(s1.family, Q, 0.0, 0.5)(pts))) < 1e-14
    zero = ConstantField("oneform", 4, 0.0)
    assert np.max(np.abs(moser_field(s1.family, zero, 0.05, 0.5)(pts))) == 0.0


def test_homotopy_equation(s1, pts):
    for t in (0.0, 0.5, 1.0):
        assert homotopy_residual(s1.family, s1.Q(), 0.05, t, pts) < 1e-6


def test_isotopy_identity_cases(s1, pts):
    r = integrate_isotopy(s1.family, s1.Q(), 0.0, pts)
    assert r.ode_stats["steps"] == 0 and r.residual < 1e-12
    np.testing.assert_array_equal(r.images, pts)
    zero = ConstantField("oneform", 4, 0.0)
    r0 = integrate_isotopy(s1.family, zero, 0.05, pts[:2])
    np.testing.assert_allclose(r0.images, pts[:2], atol=1e-15)
    assert r0.residual < 1e-12


def test_isotopy_conjugates_and_jacobian_matches_fd(s1, pts):
    r = integrate_isotopy(s1.family, s1.Q(), 0.05, pts[:3])
    assert r.residual < 1e-6
    # the variational jacobian agrees with a finite difference of the flow map
    h = 1e-5
    q = pts[0]
    fd = np.empty((4, 4))
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        fd[:, k] = (r.flow_map(q + e) - r.flow_map(q - e)) / (2 * h)
    np.testing.assert_allclose(r.jacobians[0], fd, atol=1e-7)


def test_isotopy_failures_name_the_trajectory(s1, pts):
    with pytest.raises(IntegrationError) as info:
        integrate_isotopy(s1.family, s1.Q(), 0.05, pts[:2] * 0 + 0.9, bound=0.5)
    assert info.value.trajectory == 0
    # beyond eps_max the gauge path degenerates part way along the isotopy
    Q = s1.Q(16, 8)  # low order suffices here and keeps the stiff run short
    e, _ = find_eps_max(s1.family, Q, pts, eps_hi=50.0)
    bad = [i for i, q in enumerate(pts) if gauge_is_degenerate(s1.family, Q, 1.5 * e, q[None])]
    with pytest.raises(IntegrationError) as info:
        integrate_isotopy(s1.family, Q, 1.5 * e, pts[bad[:1]], rtol=1e-5, atol=1e-5)
    assert info.value.t_reached is not None and 0.0 < info.value.t_reached <= 1.0


def test_first_order_cocycles(s1, pts):
    Q = s1.Q()
    pair = first_order_cocycles(s1.family, Q, pts)
    np.testing.assert_allclose(pair.Lam0(pts), s1.family.Lam(0.0)(pts), atol=1e-8)
    assert pair.residuals["cocycle"] < 1e-7
    assert pair.residuals["cocycle_avg"] < 1e-7
    assert pair.residuals["coboundary"] < 1e-6
    c, k, r = remainder_fit(s1.family, Q, pair, pts)
    assert abs(k - 2.0) < 0.2
    c, k, norms = moser_scaling(s1.family, Q, pts)
    assert abs(k - 1.0) < 0.1


def test_eps_max_bisection(s1, product):
    pts = s1.sample(30, 0)
    Q = s1.Q()
    e, bounded = find_eps_max(s1.family, Q, pts, eps_hi=50.0)
    assert bounded and 1.0 < e < 50.0
    assert not gauge_is_degenerate(s1.family, Q, 0.99 * e, pts)
    assert gauge_is_degenerate(s1.family, Q, 1.01 * e, pts)
    e2, bounded2 = find_eps_max(product.family, product.Q(), product.sample(10, 0), eps_hi=50.0)
    assert not bounded2 and e2 == 50.0
