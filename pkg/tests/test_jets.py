import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from acpoisson import jets as J

X, Y, Z = sp.symbols("x y z")
SYMS = (X, Y, Z)

# (jet formula, sympy formula) pairs on three variables
FORMULAS = [
    (lambda x, y, z: x * y * z + x ** 2, X * Y * Z + X ** 2),
    (lambda x, y, z: J.sin(x * y) + J.cos(z), sp.sin(X * Y) + sp.cos(Z)),
    (lambda x, y, z: J.exp(x - y) / (1.0 + z * z), sp.exp(X - Y) / (1 + Z ** 2)),
    (lambda x, y, z: J.sqrt(2.0 + x * x) * J.log(3.0 + y), sp.sqrt(2 + X ** 2) * sp.log(3 + Y)),
    (lambda x, y, z: J.tanh(x + 2.0 * z) ** 3, sp.tanh(X + 2 * Z) ** 3),
    (lambda x, y, z: (1.0 + x * x) ** -1.5 - y / (2.0 + z), (1 + X ** 2) ** sp.Rational(-3, 2) - Y / (2 + Z)),
]

coords = arrays(np.float64, (4, 3), elements=st.floats(-1.5, 1.5))


def sympy_tower(expr, pts):
    f = sp.lambdify(SYMS, expr, "numpy")
    g = [sp.lambdify(SYMS, sp.diff(expr, s), "numpy") for s in SYMS]
    h = [[sp.lambdify(SYMS, sp.diff(expr, a, b), "numpy") for b in SYMS] for a in SYMS]
    args = [pts[:, i] for i in range(3)]
    v = np.broadcast_to(f(*args), (len(pts),))
    gv = np.array([np.broadcast_to(gi(*args), (len(pts),)) for gi in g])
    hv = np.array([[np.broadcast_to(hij(*args), (len(pts),)) for hij in row] for row in h])
    return v, gv, hv


@pytest.mark.parametrize("k", range(len(FORMULAS)))
@settings(max_examples=15, deadline=None)
@given(pts=coords)
def test_second_order_tower_matches_symbolic(k, pts):
    fn, expr = FORMULAS[k]
    q = J.seed(pts, 2)
    out = fn(q[..., 0], q[..., 1], q[..., 2])
    v, g, h = sympy_tower(expr, pts)
    np.testing.assert_allclose(out.v, v, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(out.g, g, rtol=1e-11, atol=1e-11)
    np.testing.assert_allclose(out.h, h, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(out.h, np.swapaxes(out.h, 0, 1), atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(pts=coords)
def test_matrix_inverse_derivative(pts):
    q = J.seed(pts, 2)
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    m = J.assemble([[2.0 + x * x, y], [z * y, 3.0 + J.sin(z)]], (len(pts),))
    mi = J.inv(m)
    prod = J.matmul(m, mi)
    np.testing.assert_allclose(prod.v, np.broadcast_to(np.eye(2), prod.v.shape), atol=1e-13)
    np.testing.assert_allclose(prod.g, 0.0, atol=1e-12)
    np.testing.assert_allclose(prod.h, 0.0, atol=1e-11)


def test_fd_jet_agrees_with_forward_mode():
    pts = np.array([[0.3, -0.2, 0.7], [1.1, 0.4, -0.5]])

    def fn_arr(p):
        return np.sin(p[:, 0] * p[:, 1]) + np.exp(p[:, 2]) * p[:, 0]

    q = J.seed(pts, 2)
    exact = J.sin(q[..., 0] * q[..., 1]) + J.exp(q[..., 2]) * q[..., 0]
    fd = J.fd_jet(fn_arr, pts, 2)
    np.testing.assert_allclose(fd.g, exact.g, atol=1e-9)
    np.testing.assert_allclose(fd.h, exact.h, atol=1e-6)


def test_compose_is_chain_rule():
    pts = np.array([[0.2, 0.5], [-0.4, 1.0]])
    q = J.seed(pts, 2)
    inner = J.stack([q[..., 0] * q[..., 1], J.sin(q[..., 0])])
    u = J.seed(inner.v, 2)
    outer = J.stack([u[..., 0] ** 2 + u[..., 1], J.exp(u[..., 1]) * u[..., 0]])
    composed = J.compose(outer, inner)
    a, b = inner[..., 0], inner[..., 1]
    direct = J.stack([a ** 2 + b, J.exp(b) * a])
    np.testing.assert_allclose(composed.g, direct.g, atol=1e-13)
    np.testing.assert_allclose(composed.h, direct.h, atol=1e-12)


def test_truncation_and_numpy_interop():
    q = J.seed(np.array([[1.0, 2.0]]), 2)
    j = q[..., 0] * q[..., 1]
    assert j.order == 2 and j.truncate(1).order == 1 and j.truncate(0).order == 0
    with pytest.raises(TypeError):
        np.add(np.ones(1), j)  # numpy must not swallow jets
