"""Torus actions and averaging of tensor fields, connections and Dirac structures.

Angles range over ``[0, 2 pi)^k`` with Haar measure ``dt / (2 pi)^k``.
The one-form ``Theta`` attached to a family ``rho_1..rho_k`` is

    Theta(q) = (2 pi)^{-k} int int_0^1 sum_j t_j (Phi_{tau t}^* rho_j)(q) dtau dt,

the gauge potential relating a Dirac structure to its average.  With the
moment forms ``mu_j`` of a locally Hamiltonian action the potential used on
the Poisson side is ``Q = -Theta((mu_j)_{1,0})``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets as J
from .calculus import PointJetField, exterior_derivative, pullback, sharp
from .dirac import DiracField
from .errors import ConstructionError, GaugeDegeneracyError
from .fields import DerivedField, Field, MemoField, as_points
from .foliation import RANK_RTOL, Connection, bigraded_component
from .jets import Jet
from .quadrature import TWO_PI, gauss_legendre, periodic, tensor_product

__all__ = [
    "TorusAction",
    "CompatibilityData",
    "CompatibilityReport",
    "verify_compatibility",
    "haar_average",
    "average_connection",
    "averaged_projector",
    "theta_form",
    "q_form",
    "moment_theta",
    "averaged_dirac",
    "averaged_poisson",
    "averaged_poisson_field",
    "invariance_residual",
    "group_samples",
    "dirac_invariance_residual",
]

_ROWS_PER_CHUNK = 16384


class TorusAction:
    """Action of the torus ``T^k`` on the chart.

    Parameters
    ----------
    dim, k : int
    flow : callable
        ``flow(t, q)`` with angles ``t`` of shape ``(B, k)`` and points
        ``q`` (array or jet of shape ``(B, n)``) returns the image points.
    jacobian : callable
        ``jacobian(t, q)`` returns ``(B, n, n)`` (array or jet).
    generators : list of Field, optional
        Infinitesimal generators; computed by differentiating the flow in
        the angles when omitted.
    """

    def __init__(self, dim, k, flow, jacobian, generators=None, name="T^k"):
        self.dim = int(dim)
        self.k = int(k)
        self._flow = flow
        self._jacobian = jacobian
        self.name = name
        self.generators = generators if generators is not None else self._fd_generators()

    # construction ----------------------------------------------------
    @classmethod
    def rotations(cls, dim, planes, speeds=None, name=None):
        """Commuting counterclockwise rotations in disjoint coordinate planes.

        Plane ``(i, j)`` rotates ``(x_i, x_j)`` by angle ``omega t``:
        the generator is ``omega (-x_j d_i + x_i d_j)``.
        """
        planes = [tuple(p) for p in planes]
        used = [c for p in planes for c in p]
        if len(set(used)) != len(used):
            raise ValueError("rotation planes must be disjoint")
        speeds = np.ones(len(planes)) if speeds is None else np.asarray(speeds, float)
        k = len(planes)

        def matrices(t):
            t = np.atleast_2d(np.asarray(t, float))
            m = np.broadcast_to(np.eye(dim), (t.shape[0], dim, dim)).copy()
            for j, (a, b) in enumerate(planes):
                th = speeds[j] * t[:, j]
                c, s = np.cos(th), np.sin(th)
                m[:, a, a], m[:, a, b] = c, -s
                m[:, b, a], m[:, b, b] = s, c
            return m

        def flow(t, q):
            m = matrices(t)
            return J.einsum("ij,j->i", m, q) if isinstance(q, Jet) else np.einsum("zij,zj->zi", m, q)

        def jacobian(t, q):
            return matrices(t)

        from .fields import FunctionField

        gens = []
        for j, (a, b) in enumerate(planes):
            w = float(speeds[j])

            def gen(x, a=a, b=b, w=w):
                out = [0.0] * dim
                out[a] = -w * x[b]
                out[b] = w * x[a]
                return out

            gens.append(FunctionField("vector", dim, gen, name=f"a{j + 1}"))
        return cls(dim, k, flow, jacobian, gens, name=name or f"rot{planes}")

    @classmethod
    def trivial(cls, dim, k=1):
        from .fields import ConstantField

        def flow(t, q):
            return q

        def jacobian(t, q):
            b = np.atleast_2d(np.asarray(t)).shape[0]
            return np.broadcast_to(np.eye(dim), (b, dim, dim))

        return cls(dim, k, flow, jacobian, [ConstantField("vector", dim, 0.0) for _ in range(k)], "trivial")

    def _fd_generators(self):
        gens = []
        for j in range(self.k):
            def fn(points, order, j=j):
                if order > 0:
                    raise ValueError("finite-difference generators provide values only")
                h = 1e-5
                t = np.zeros((points.shape[0], self.k))
                t[:, j] = h
                d = (self.flow(t, points) - self.flow(-t, points)) / (2 * h)
                return Jet(d)

            gens.append(PointJetField("vector", self.dim, fn, max_order=0, name=f"a{j + 1}"))
        return gens

    # evaluation ------------------------------------------------------
    def _angles(self, t, batch):
        t = np.asarray(t, float)
        if t.ndim <= 1:
            t = np.broadcast_to(t.reshape(1, -1), (batch, self.k))
        return t

    def flow(self, t, q):
        """Image of points ``q`` under the group element with angles ``t``."""
        b = (q.v if isinstance(q, Jet) else np.atleast_2d(q)).shape[0]
        return self._flow(self._angles(t, b), q)

    def jacobian(self, t, q):
        b = (q.v if isinstance(q, Jet) else np.atleast_2d(q)).shape[0]
        return self._jacobian(self._angles(t, b), q)

    def element(self, t):
        """The diffeomorphism of a fixed group element as a :class:`SmoothMap`."""
        from .calculus import SmoothMap

        t = np.asarray(t, float).reshape(self.k)
        return SmoothMap(self.dim, lambda q: self.flow(t, q), lambda q: self.jacobian(t, q),
                         inverse=lambda p: self.flow(-t, p), name=f"Phi{t.tolist()}")

    # checks ----------------------------------------------------------
    def group_law_residual(self, points, rng=None, samples=4) -> float:
        rng = np.random.default_rng(0) if rng is None else rng
        p = as_points(points, self.dim)
        worst = 0.0
        for _ in range(samples):
            s, t = rng.uniform(0, TWO_PI, self.k), rng.uniform(0, TWO_PI, self.k)
            lhs = self.flow(t, self.flow(s, p))
            rhs = self.flow(np.mod(s + t, TWO_PI), p)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        zero = float(np.max(np.abs(self.flow(np.zeros(self.k), p) - p)))
        return max(worst, zero)

    def generator_residual(self, points) -> float:
        p = as_points(points, self.dim)
        h = 1e-5
        worst = 0.0
        for j, a in enumerate(self.generators):
            t = np.zeros(self.k)
            t[j] = h
            fd = (self.flow(t, p) - self.flow(-t, p)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - a(p)))))
        return worst


@dataclass
class CompatibilityData:
    """Moment one-forms ``mu_j`` with ``a_M^{(j)} = sharp(P, mu_j)``."""

    mu: list
    locally_hamiltonian: bool = True


@dataclass
class CompatibilityReport:
    passed: bool
    generator_residual: float
    closedness_residual: float


def verify_compatibility(action: TorusAction, P: Field, data: CompatibilityData, sample,
                         tol: float = 1e-10) -> CompatibilityReport:
    """Residuals of ``sharp(P, mu_j) = a_M^{(j)}`` and, if flagged, ``d mu_j = 0``."""
    p = as_points(sample, action.dim)
    gen = max(float(np.max(np.abs(sharp(P, m)(p) - a(p)))) for m, a in zip(data.mu, action.generators))
    closed = 0.0
    if data.locally_hamiltonian:
        closed = max(float(np.max(np.abs(exterior_derivative(m)(p)))) for m in data.mu)
    return CompatibilityReport(gen < tol and closed < tol, gen, closed)


# ----------------------------------------------------------------------
# quadrature-based fields
class _NodeSum(DerivedField):
    """Field ``sum_m c_{m,j} (Phi_{a_m}^* T_j)(q)`` over quadrature nodes."""

    def __init__(self, action, tensors, angles, coeffs, name):
        t0 = tensors[0]
        super().__init__(t0.kind, t0.dim, self._eval, shape=t0.comp_shape,
                         max_order=min(t.max_order for t in tensors), name=name)
        self.action = action
        self.tensors = tensors
        self.angles = np.asarray(angles, float)  # (M, k)
        self.coeffs = np.asarray(coeffs, float)  # (M, ntensors)

    def _eval(self, q: Jet) -> Jet:
        b = q.v.shape[0]
        m = self.angles.shape[0]
        step = max(1, _ROWS_PER_CHUNK // m)
        if b > step:
            from .fields import _concat

            return _concat([self._eval(q.batch_slice(i, i + step)) for i in range(0, b, step)])
        qt = q.tile_batch(m)
        t = np.repeat(self.angles, b, axis=0)
        image = self.action.flow(t, qt)
        jm = self.action.jacobian(t, qt)
        from .calculus import _inv_checked, _pull_components

        jinv = _inv_checked(jm, qt)
        comp = len(self.comp_shape)
        total = None
        for j, tens in enumerate(self.tensors):
            w = self.coeffs[:, j]
            if not np.any(w):
                continue
            pulled = _pull_components(tens.kind, jm, jinv, tens.at(image))
            pulled = pulled.reshape((m, b) + self.comp_shape)
            wb = w.reshape((m,) + (1,) * (1 + comp))
            term = (pulled * wb).sum(axis=0)
            total = term if total is None else total + term
        if total is None:
            return J.constant_like(np.zeros((b,) + self.comp_shape), q)
        return total


def _haar_nodes(k, nodes):
    rule = periodic(nodes)
    ang, w = tensor_product([rule] * k)
    return ang, w / TWO_PI ** k


def haar_average(action: TorusAction, T: Field, nodes: int = 64, memo: bool = True) -> Field:
    """Haar average ``int Phi_g^* T dg`` by the tensor-product trapezoidal rule."""
    ang, w = _haar_nodes(action.k, nodes)
    f = _NodeSum(action, [T], ang, w[:, None], name=f"<{T.name}>")
    return MemoField(f) if memo else f


def averaged_projector(action: TorusAction, conn: Connection, nodes: int = 64) -> Field:
    """Average of the vertical projector as an endomorphism field."""
    gamma = DerivedField("endo", conn.chart.n, conn.projector,
                         max_order=conn.gamma.max_order, name="gamma")
    return haar_average(action, gamma, nodes)


def average_connection(action: TorusAction, conn: Connection, nodes: int = 64,
                       check_points=None, tol: float = 1e-10) -> Connection:
    """Connection of the averaged projector.

    The averaged projector keeps the form ``[[I, Gamma'], [0, 0]]`` for a
    leaf-preserving action, and ``Gamma'`` is read off its upper right
    block.  When ``check_points`` are given, idempotence is verified there
    and a :class:`ConstructionError` is raised beyond ``tol``.
    """
    chart = conn.chart
    avg = averaged_projector(action, conn, nodes)
    U, L = chart.U, chart.L
    gamma = DerivedField("tensor", chart.n, lambda q: J.matmul(J.matmul(U.T, avg.at(q)), L),
                         shape=(chart.n_v, chart.n_h), max_order=avg.max_order, name="<Gamma>")
    out = Connection(chart, gamma, name=f"<{conn.name}>")
    out.averaged_projector = avg
    if check_points is not None:
        g = avg(as_points(check_points, chart.n))
        res = float(np.max(np.abs(g @ g - g)))
        if res > tol:
            raise ConstructionError("averaged projector is not idempotent", res)
    return out


def theta_form(action: TorusAction, rho, t_nodes: int = 64, tau_nodes: int = 32,
               scheme: str = "nested", memo: bool = True) -> Field:
    """The one-form ``Theta`` built from one-forms ``rho_1..rho_k``.

    Parameters
    ----------
    scheme : {"nested", "ray"}
        ``"nested"`` applies Gauss-Legendre rules in ``t`` (on ``[0, 2 pi]``)
        and ``tau`` (on ``[0, 1]``).  ``"ray"`` (circle actions only) uses
        the substitution ``u = tau t`` which turns the double integral into
        ``(2 pi)^{-1} int_0^{2 pi} (2 pi - u) Phi_u^* rho du``, evaluated with
        ``t_nodes`` Gauss-Legendre nodes.
    """
    rho = list(rho)
    k = action.k
    if len(rho) != k:
        raise ValueError("need one one-form per circle factor")
    if scheme == "ray":
        if k != 1:
            raise ValueError("the ray scheme is available for circle actions only")
        rule = gauss_legendre(t_nodes, 0.0, TWO_PI)
        ang = rule.nodes[:, None]
        coeffs = (rule.weights * (TWO_PI - rule.nodes) / TWO_PI)[:, None]
    elif scheme == "nested":
        rt = gauss_legendre(t_nodes, 0.0, TWO_PI)
        rtau = gauss_legendre(tau_nodes, 0.0, 1.0)
        tt, wt = tensor_product([rt] * k)  # (Mt, k)
        ang = (rtau.nodes[:, None, None] * tt[None]).reshape(-1, k)
        wt_all = (rtau.weights[:, None] * wt[None]).reshape(-1) / TWO_PI ** k
        tj = np.broadcast_to(tt[None], (tau_nodes,) + tt.shape).reshape(-1, k)
        coeffs = wt_all[:, None] * tj
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    f = _NodeSum(action, rho, ang, coeffs, name="Theta")
    return MemoField(f, name="Theta") if memo else f


def moment_theta(action: TorusAction, data: CompatibilityData, conn: Connection,
                 t_nodes: int = 64, tau_nodes: int = 32, scheme: str = "nested", memo: bool = True,
                 part: int = 1) -> Field:
    """``Theta`` applied to a bigraded part of the moment forms.

    ``part = 1`` uses the transverse parts ``(mu_j)_{1,0}`` (giving ``-Q``);
    ``part = 0`` uses ``(mu_j)_{0,1}``, whose ``-d Theta`` gauges the Dirac
    structure to its average.
    """
    if not data.locally_hamiltonian:
        raise ValueError("Q requires a locally Hamiltonian action")
    if part not in (0, 1):
        raise ValueError("part must be 0 or 1")
    rho = [bigraded_component(m, conn, part) for m in data.mu]
    return theta_form(action, rho, t_nodes, tau_nodes, scheme, memo=memo)


def q_form(action: TorusAction, data: CompatibilityData, conn: Connection,
           t_nodes: int = 64, tau_nodes: int = 32, scheme: str = "nested") -> Field:
    """``Q = -Theta((mu_j)_{1,0})``, with vanishing components along the leaves."""
    theta = moment_theta(action, data, conn, t_nodes, tau_nodes, scheme, memo=False)
    LLt = conn.chart.L @ conn.chart.L.T
    f = DerivedField("oneform", conn.chart.n, lambda q: -J.einsum("ij,j->i", LLt, theta.at(q)),
                     max_order=theta.max_order, name="Q")
    return MemoField(f, name="Q")


def averaged_dirac(D: DiracField, theta: Field) -> DiracField:
    """Gauge transformation of ``D`` by ``B = -d Theta``."""
    dtheta = exterior_derivative(theta)
    return D.gauge(-1.0 * dtheta, name=f"<{D.name}>")


def _check_gauge(m, points, rtol=RANK_RTOL, eps=None, t=None):
    s = np.linalg.svd(m, compute_uv=False)
    bad = s[..., -1] <= rtol * np.maximum(s[..., 0], 1.0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise GaugeDegeneracyError(s[i, -1], point=points[i], eps=eps, t=t)


def averaged_poisson_field(Pi: Field, Q: Field, t: float = 1.0, dQ: Field | None = None,
                           eps=None, rtol: float = RANK_RTOL) -> Field:
    """``Pi (I + t dQ Pi)^{-1}`` as a bivector field.

    Raises :class:`GaugeDegeneracyError` wherever the smallest singular
    value of ``I + t dQ Pi`` falls below ``rtol`` times its scale.
    """
    dQ = exterior_derivative(Q) if dQ is None else dQ
    n = Pi.dim

    def fn(q):
        pv = Pi.at(q)
        m = np.eye(n) + J.matmul(dQ.at(q), pv) * t
        _check_gauge(J.value(m), q.v, rtol=rtol, eps=eps, t=t)
        out = J.matmul(pv, J.inv(m))
        return 0.5 * (out - out.swapaxes(-1, -2))

    return DerivedField("bivector", n, fn, max_order=min(Pi.max_order, dQ.max_order),
                        name=f"avg({Pi.name})")


def averaged_poisson(Pi: Field, Q: Field, points) -> np.ndarray:
    """Values of the averaged bivector ``Pi (I + dQ Pi)^{-1}`` at points."""
    return averaged_poisson_field(Pi, Q)(as_points(points, Pi.dim))


# ----------------------------------------------------------------------
# invariance checks
def group_samples(k, count=8, seed=7):
    """Seeded group elements away from the quadrature grid."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, TWO_PI, size=(count, k))


def invariance_residual(action: TorusAction, T: Field, points, angles) -> float:
    """Sup over angles and points of ``|Phi_t^* T - T|``."""
    p = as_points(points, action.dim)
    base = T(p)
    worst = 0.0
    for t in np.atleast_2d(angles):
        pulled = pullback(action.element(t), T)(p)
        worst = max(worst, float(np.max(np.abs(pulled - base))))
    return worst


def dirac_invariance_residual(action: TorusAction, D: DiracField, points, angles) -> float:
    """Largest principal angle between ``D(q)`` and ``Phi_t^* D`` at ``q``."""
    from .dirac import DiracSubspace, max_principal_angle

    p = as_points(points, action.dim)
    base = D.bases(p)
    worst = 0.0
    for t in np.atleast_2d(angles):
        img = action.flow(t, p)
        jm = np.asarray(J.value(action.jacobian(t, p)))
        moved = D.bases(img)
        for i in range(p.shape[0]):
            pb = DiracSubspace(moved[i]).pullback(jm[i])
            worst = max(worst, max_principal_angle(pb.basis, base[i]))
    return worst
