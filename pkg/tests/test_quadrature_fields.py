import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acpoisson import jets as J
from acpoisson.fields import ConstantField, FunctionField, MemoField, antisymmetrize
from acpoisson.quadrature import TWO_PI, gauss_legendre, periodic, tensor_product


@settings(max_examples=30, deadline=None)
@given(k=st.integers(0, 30), phase=st.floats(0, 6.3))
def test_periodic_rule_exact_for_low_harmonics(k, phase):
    r = periodic(64)
    got = r.integrate(np.cos(k * r.nodes + phase))
    exact = TWO_PI * np.cos(phase) if k == 0 else 0.0
    assert abs(got - exact) < 1e-12


@settings(max_examples=30, deadline=None)
@given(deg=st.integers(0, 63), a=st.floats(-2, 0), b=st.floats(0.1, 3))
def test_gauss_legendre_exact_to_degree(deg, a, b):
    r = gauss_legendre(32, a, b)
    got = r.integrate(r.nodes ** deg)
    exact = (b ** (deg + 1) - a ** (deg + 1)) / (deg + 1)
    assert abs(got - exact) < 1e-11 * max(1.0, abs(exact))


def test_tensor_product_and_validation():
    nodes, w = tensor_product([periodic(8), gauss_legendre(4)])
    assert nodes.shape == (32, 2)
    assert abs(w.sum() - TWO_PI) < 1e-12
    with pytest.raises(ValueError):
        periodic(1)


def test_field_arithmetic_and_antisymmetry(rng):
    p = rng.uniform(-1, 1, (4, 3))
    a = FunctionField("bivector", 3, lambda x: [[0.0, x[0], 0.0], [0.0, 0.0, x[1]], [0.0, 0.0, 0.0]])
    v = a(p)
    np.testing.assert_allclose(v, -np.swapaxes(v, -1, -2))
    np.testing.assert_allclose(v[:, 0, 1], 0.5 * p[:, 0])  # projected onto the antisymmetric part
    c = ConstantField("bivector", 3, [[0, 1, 0], [-1, 0, 0], [0, 0, 0]])
    np.testing.assert_allclose((a + 2.0 * c - c)(p), v + c(p))
    t = rng.normal(size=(3, 3, 3))
    s = antisymmetrize(t, 3)
    np.testing.assert_allclose(s, -np.swapaxes(s, -1, -2), atol=1e-15)
    np.testing.assert_allclose(s, -np.swapaxes(s, -3, -2), atol=1e-15)


def test_memo_field_matches_base(rng):
    p = rng.uniform(-1, 1, (70, 2))
    base = FunctionField("scalar", 2, lambda x: J.sin(x[0]) * x[1] ** 2)
    m = MemoField(base, chunk=16)
    for order in (0, 1, 2):
        a, b = base.jet(p, order), m.jet(p, order)
        np.testing.assert_allclose(b.v, a.v)
        if order:
            np.testing.assert_allclose(b.g, a.g)
    np.testing.assert_allclose(m.jet(p, 2).h, base.jet(p, 2).h)


def test_order_limits_enforced():
    f = FunctionField("scalar", 2, lambda x: x[0], max_order=1)
    with pytest.raises(ValueError):
        f.jet(np.zeros((1, 2)), 2)
    with pytest.raises(ValueError):
        f(np.zeros((1, 3)))
