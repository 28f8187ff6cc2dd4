import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from acpoisson import jets as J
from acpoisson.calculus import (
    SmoothMap,
    exterior_derivative,
    flat,
    jacobi_residual,
    lie_bracket,
    lie_derivative,
    pullback,
    pullback_values,
    schouten_bivector_bivector,
    sharp,
)
from acpoisson.fields import ConstantField, FunctionField

pts3 = arrays(np.float64, (5, 3), elements=st.floats(-1.0, 1.0))
xs = sp.symbols("x0:3")


def lie_poisson_so3():
    # {x_i, x_j} = eps_ijk x_k
    return FunctionField("bivector", 3, lambda x: [[0.0, x[2], -x[1]], [-x[2], 0.0, x[0]], [x[1], -x[0], 0.0]])


def non_poisson():
    return FunctionField("bivector", 3, lambda x: [[0.0, x[0], -x[2]], [-x[0], 0.0, x[1]], [x[2], -x[1], 0.0]])


def sympy_jacobiator(pi, p):
    """Cyclic sum {x_i,{x_j,x_k}} of the coordinate brackets."""
    n = len(xs)
    out = np.zeros((len(p), n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                e = sum(pi[i][l] * sp.diff(pi[j][k], xs[l]) + pi[j][l] * sp.diff(pi[k][i], xs[l])
                        + pi[k][l] * sp.diff(pi[i][j], xs[l]) for l in range(n))
                f = sp.lambdify(xs, e, "numpy")
                out[:, i, j, k] = np.broadcast_to(f(*p.T), (len(p),))
    return out


@settings(max_examples=10, deadline=None)
@given(p=pts3)
def test_schouten_is_minus_twice_jacobiator(p):
    x0, x1, x2 = xs
    pi = [[0, x0, -x2], [-x0, 0, x1], [x2, -x1, 0]]
    got = schouten_bivector_bivector(non_poisson(), non_poisson())(p)
    np.testing.assert_allclose(got, -2.0 * sympy_jacobiator(pi, p), atol=1e-12)


def test_lie_poisson_is_poisson_and_deformation_is_not(rng):
    p = rng.uniform(-1, 1, (20, 3))
    assert jacobi_residual(lie_poisson_so3(), p) < 1e-14
    assert jacobi_residual(non_poisson(), p) > 1e-2


@settings(max_examples=10, deadline=None)
@given(p=pts3)
def test_d_squared_vanishes(p):
    f = FunctionField("scalar", 3, lambda x: J.sin(x[0] * x[1]) + x[2] ** 3 * x[0])
    a = FunctionField("oneform", 3, lambda x: [x[1] * x[2], J.cos(x[0]), x[0] * x[1] ** 2])
    assert np.max(np.abs(exterior_derivative(exterior_derivative(f))(p))) < 1e-12
    assert np.max(np.abs(exterior_derivative(exterior_derivative(a))(p))) < 1e-12


def test_exterior_derivative_of_oneform_components(rng):
    p = rng.uniform(-1, 1, (6, 3))
    a = FunctionField("oneform", 3, lambda x: [x[1] * x[2], x[0] ** 2, x[0] * x[1]])
    da = exterior_derivative(a)(p)
    # (da)_{ij} = d_i a_j - d_j a_i
    exp01 = 2 * p[:, 0] - p[:, 2]
    exp02 = p[:, 1] - p[:, 1]
    exp12 = p[:, 0]
    np.testing.assert_allclose(da[:, 0, 1], exp01, atol=1e-14)
    np.testing.assert_allclose(da[:, 0, 2], exp02, atol=1e-14)
    np.testing.assert_allclose(da[:, 1, 2], exp12, atol=1e-14)


def test_lie_derivative_matches_linear_flow(rng):
    """d/dt (exp(tA))^* Pi at t = 0 equals L_X Pi for X = A x."""
    A = rng.normal(size=(3, 3))
    X = FunctionField("vector", 3, lambda x: [sum(A[i, j] * x[j] for j in range(3)) for i in range(3)])
    Pi = non_poisson()
    p = rng.uniform(-1, 1, (5, 3))

    def flow(t):
        m = expm(t * A)
        return SmoothMap(3, lambda q: J.einsum("ij,j->i", m, q) if isinstance(q, J.Jet) else q @ m.T)

    h = 1e-4
    d1 = (pullback(flow(h), Pi)(p) - pullback(flow(-h), Pi)(p)) / (2 * h)
    d2 = (pullback(flow(h / 2), Pi)(p) - pullback(flow(-h / 2), Pi)(p)) / h
    rich = (4 * d2 - d1) / 3
    np.testing.assert_allclose(rich, lie_derivative(X, Pi)(p), atol=1e-9)


def test_lie_bracket_antisymmetric_and_coordinate(rng):
    p = rng.uniform(-1, 1, (4, 3))
    X = FunctionField("vector", 3, lambda x: [x[1], -x[0], 0.0])
    Y = FunctionField("vector", 3, lambda x: [0.0, x[2], -x[1]])
    a = lie_bracket(X, Y)(p)
    np.testing.assert_allclose(a, -lie_bracket(Y, X)(p), atol=1e-15)
    # [x1 d0 - x0 d1, x2 d1 - x1 d2] = -(x2 d0 - x0 d2) up to sign conventions
    expected = np.stack([-p[:, 2], np.zeros(len(p)), p[:, 0]], axis=-1)
    np.testing.assert_allclose(a, expected, atol=1e-15)


def test_pullback_naturality(rng):
    """phi^* d(alpha) = d(phi^* alpha) for a polynomial map."""
    phi = SmoothMap.from_formula(3, lambda x: [x[0] + 0.3 * x[1] ** 2, x[1] + 0.2 * x[0] * x[2], x[2] - 0.1 * x[0] ** 3])
    a = FunctionField("oneform", 3, lambda x: [x[1] * x[2], x[0] ** 2 * x[2], J.sin(x[0] * x[1])])
    p = rng.uniform(-0.8, 0.8, (10, 3))
    lhs = pullback(phi, exterior_derivative(a))(p)
    rhs = exterior_derivative(pullback(phi, a))(p)
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_smoothmap_jacobian_fd_and_bivector_transformation(rng):
    phi = SmoothMap.from_formula(3, lambda x: [x[0] + 0.3 * x[1] ** 2, x[1], x[2] + x[0] * x[1]])
    p = rng.uniform(-1, 1, (5, 3))
    assert phi.jacobian_fd_residual(p) < 1e-8
    Pi = lie_poisson_so3()
    jm = phi.jacobian_values(p)
    ji = np.linalg.inv(jm)
    expected = ji @ Pi(phi(p)) @ np.swapaxes(ji, -1, -2)
    np.testing.assert_allclose(pullback_values(phi, Pi, p), expected, atol=1e-14)


def test_sharp_and_flat_contract_first_slot():
    Pi = ConstantField("bivector", 3, [[0, 1, 2], [-1, 0, 3], [-2, -3, 0]])
    B = ConstantField("twoform", 3, [[0, 4, 0], [-4, 0, 5], [0, -5, 0]])
    a = ConstantField("oneform", 3, [1.0, 0.0, 0.0])
    X = ConstantField("vector", 3, [0.0, 1.0, 0.0])
    q = np.zeros((1, 3))
    np.testing.assert_allclose(sharp(Pi, a)(q)[0], [0, 1, 2])
    np.testing.assert_allclose(flat(B, X)(q)[0], [-4, 0, 5])


def test_empty_sample_rejected():
    with pytest.raises(ValueError):
        jacobi_residual(lie_poisson_so3(), np.zeros((0, 3)))
