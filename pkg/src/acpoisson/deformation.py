"""Deformations ``Pi_eps = P + eps Lambda_eps`` and the path to their average.

The gauge family ``Pi_{eps,t} = Pi_eps (I + t dQ Pi_eps)^{-1}`` joins
``Pi_eps`` (``t = 0``) to the averaged structure (``t = 1``).  The Moser
field ``Z_{eps,t} = -sharp(Pi_{eps,t}, Q)`` satisfies

    L_Z Pi_{eps,t} = -d/dt Pi_{eps,t},

so its flow ``psi`` between ``t = 0`` and ``t = 1`` transports ``Pi_eps``
into the average.  With pullbacks of bivectors taken as
``J^{-1} A(phi(q)) J^{-T}``, the map realising ``phi^* Pi_eps = avg`` is
the inverse of that flow, computed by integrating from ``t = 1`` back to
``t = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from . import jets as J
from .averaging import averaged_poisson_field
from .calculus import SmoothMap, exterior_derivative, jacobi_residual, lie_derivative, pullback_values
from .errors import GaugeDegeneracyError, IntegrationError
from .fields import DerivedField, Field, as_points
from .foliation import RANK_RTOL, Connection, almost_coupling_report, bigrade_bivector
from .quadrature import gauss_legendre

__all__ = [
    "DeformationFamily",
    "IsotopyResult",
    "CocyclePair",
    "gauge_family",
    "gauge_family_field",
    "moser_generator",
    "moser_field",
    "homotopy_residual",
    "integrate_isotopy",
    "first_order_cocycles",
    "remainder_fit",
    "moser_scaling",
    "find_eps_max",
    "gauge_is_degenerate",
]


@dataclass
class DeformationFamily:
    """One-parameter family ``Pi_eps = P + eps Lambda_eps``.

    Parameters
    ----------
    P : Field
        Leaf-tangent Poisson bivector.
    Lam : callable
        ``eps -> Field`` giving ``Lambda_eps`` (values in the horizontal
        wedge square of ``conn``).
    conn : Connection
        The fixed normal bundle.
    """

    P: Field
    Lam: Callable[[float], Field]
    conn: Connection
    name: str = "family"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.P.dim

    def eval(self, eps: float) -> Field:
        """The bivector field ``Pi_eps``."""
        eps = float(eps)
        if eps == 0.0:
            return self.P
        key = round(eps, 15)
        if key not in self._cache:
            self._cache[key] = self.P + eps * self.Lam(eps)
        return self._cache[key]

    def check(self, eps_grid, sample, tol: float = 1e-9) -> dict:
        """Jacobi, almost-coupling and leaf-block residuals over an ``eps`` grid."""
        p = as_points(sample, self.dim)
        pv = bigrade_bivector(self.P, self.conn, p).p02
        out = {"jacobi": 0.0, "mixed": 0.0, "leaf_block": 0.0}
        for e in eps_grid:
            pe = self.eval(e)
            out["jacobi"] = max(out["jacobi"], jacobi_residual(pe, p))
            out["mixed"] = max(out["mixed"], almost_coupling_report(pe, self.conn, p).sup_mixed)
            blocks = bigrade_bivector(pe, self.conn, p)
            out["leaf_block"] = max(out["leaf_block"], float(np.max(np.abs(blocks.p02 - pv))))
        out["passed"] = all(v < tol for k, v in out.items() if k != "passed")
        return out


def gauge_family_field(family: DeformationFamily, Q: Field, eps: float, t: float,
                       dQ: Field | None = None, rtol: float = RANK_RTOL) -> Field:
    """``Pi_{eps,t}`` as a bivector field."""
    pe = family.eval(eps)
    if t == 0.0:
        return pe
    return averaged_poisson_field(pe, Q, t=t, dQ=dQ, eps=eps, rtol=rtol)


def gauge_family(family: DeformationFamily, Q: Field, eps: float, t: float, q) -> np.ndarray:
    """Values of ``Pi_{eps,t}`` at points."""
    return gauge_family_field(family, Q, eps, t)(q)


def moser_field(family: DeformationFamily, Q: Field, eps: float, t: float,
                dQ: Field | None = None, rtol: float = RANK_RTOL) -> Field:
    """``Z_{eps,t} = -sharp(Pi_{eps,t}, Q)``, i.e. the matrix product ``Pi_{eps,t} Q``."""
    pt = gauge_family_field(family, Q, eps, t, dQ, rtol)
    return DerivedField("vector", family.dim, lambda q: J.einsum("ij,j->i", pt.at(q), Q.at(q)),
                        max_order=min(pt.max_order, Q.max_order), name="Z")


def moser_generator(family: DeformationFamily, Q: Field, eps: float, t: float, q) -> np.ndarray:
    return moser_field(family, Q, eps, t)(q)


def homotopy_residual(family: DeformationFamily, Q: Field, eps: float, t: float, sample,
                      step: float = 1e-4) -> float:
    """Sup of ``|L_Z Pi_{eps,t} + d/dt Pi_{eps,t}|`` over the sample.

    The ``t``-derivative is a centered difference with one Richardson step.
    """
    p = as_points(sample, family.dim)
    dQ = exterior_derivative(Q)

    def pt(s):
        return gauge_family_field(family, Q, eps, s, dQ)(p)

    d1 = (pt(t + step) - pt(t - step)) / (2 * step)
    d2 = (pt(t + step / 2) - pt(t - step / 2)) / step
    dt = (4 * d2 - d1) / 3
    lz = lie_derivative(moser_field(family, Q, eps, t, dQ), gauge_family_field(family, Q, eps, t, dQ))(p)
    return float(np.max(np.abs(lz + dt)))


# ----------------------------------------------------------------------
# isotopy
@dataclass
class IsotopyResult:
    """Outcome of the Moser integration.

    Attributes
    ----------
    flow_map : SmoothMap
        The map ``phi_eps`` (array input only); its jacobian comes from the
        variational equation.
    residual : float
        Sup over the verification points of ``|phi^* Pi_eps - avg|``.
    ode_stats : dict
        Function evaluations, accepted steps and the tolerances used.
    images, jacobians : ndarray
        ``phi_eps`` and its jacobian at the verification points.
    """

    flow_map: SmoothMap
    residual: float
    ode_stats: dict
    points: np.ndarray
    images: np.ndarray
    jacobians: np.ndarray
    residuals: np.ndarray


# Along the isotopy the gauge path is declared degenerate once I + t dQ Pi
# loses this much relative conditioning; past it the Moser field blows up
# and the step size collapses.
GAUGE_GUARD = 1e-6


class _IsotopyIntegrator:
    def __init__(self, family, Q, eps, rtol, atol, bound, method="RK45", guard=GAUGE_GUARD):
        self.n = family.dim
        self.guard = guard
        self.dQ = exterior_derivative(Q)
        self.family, self.Q, self.eps = family, Q, eps
        self.rtol, self.atol, self.bound, self.method = rtol, atol, bound, method
        self.nfev = 0
        self.nsteps = 0

    def _z_jet(self, t, x):
        z = moser_field(self.family, self.Q, self.eps, t, self.dQ, self.guard)
        return z.jet(x[None, :], 1)

    def rhs(self, t, y):
        n = self.n
        x = y[:n]
        jm = y[n:].reshape(n, n)
        zj = self._z_jet(t, x)
        dz = np.moveaxis(zj.g[:, 0], 0, -1)  # dZ^i/dq^l
        self.nfev += 1
        return np.concatenate([zj.v[0], (dz @ jm).ravel()])

    def run(self, q, index):
        n = self.n
        if np.max(np.abs(q)) >= self.bound:
            raise IntegrationError("initial point outside the bound", t_reached=1.0, trajectory=index)
        y0 = np.concatenate([q, np.eye(n).ravel()])

        def escape(t, y):
            return self.bound - np.max(np.abs(y[:n]))

        escape.terminal = True
        try:
            sol = solve_ivp(self.rhs, (1.0, 0.0), y0, method=self.method,
                            rtol=self.rtol, atol=self.atol, events=escape)
        except GaugeDegeneracyError as exc:
            raise IntegrationError(f"gauge degeneracy along the isotopy: {exc}",
                                   t_reached=exc.t, trajectory=index) from exc
        if sol.status != 0:
            t_end = float(sol.t[-1])
            raise IntegrationError(sol.message if sol.status < 0 else "state escaped the bound",
                                   t_reached=t_end, trajectory=index)
        self.nsteps += len(sol.t) - 1
        y = sol.y[:, -1]
        return y[:n], y[n:].reshape(n, n)

    def many(self, points):
        imgs, jacs = [], []
        for i, q in enumerate(points):
            a, b = self.run(q, i)
            imgs.append(a)
            jacs.append(b)
        return np.array(imgs), np.array(jacs)


def integrate_isotopy(family: DeformationFamily, Q: Field, eps: float, points,
                      rtol: float = 1e-10, atol: float = 1e-10, bound: float = 1e6,
                      method: str = "RK45") -> IsotopyResult:
    """Integrate the Moser flow and measure the conjugacy residual.

    The time-dependent field ``Z_{eps,t}`` is integrated from ``t = 1`` down
    to ``t = 0`` together with the variational equation; the resulting map
    satisfies ``phi^* Pi_eps = avg`` (the forward flow gives the inverse
    relation).  At ``eps = 0`` no integration is performed and the identity
    map is returned.
    """
    p = as_points(points, family.dim)
    n = family.dim
    avg = gauge_family_field(family, Q, eps, 1.0)
    pe = family.eval(eps)
    if float(eps) == 0.0:
        ident = SmoothMap(n, lambda q: q, lambda q: np.broadcast_to(np.eye(n), (np.shape(J.value(q))[0], n, n)),
                          inverse=lambda q: q, jet_capable=False, name="id")
        res = np.max(np.abs(pe(p) - avg(p)), axis=(1, 2))
        return IsotopyResult(ident, float(res.max()), {"nfev": 0, "steps": 0, "rtol": rtol, "atol": atol},
                             p, p.copy(), np.broadcast_to(np.eye(n), (p.shape[0], n, n)).copy(), res)
    integ = _IsotopyIntegrator(family, Q, eps, rtol, atol, bound, method)
    imgs, jacs = integ.many(p)

    def forward(x):
        return integ.many(np.atleast_2d(x))[0]

    def jacobian(x):
        return integ.many(np.atleast_2d(x))[1]

    fmap = SmoothMap(n, forward, jacobian, jet_capable=False, name=f"phi[{eps:g}]")
    jinv = np.linalg.inv(jacs)
    pulled = jinv @ pe(imgs) @ np.swapaxes(jinv, -1, -2)
    res = np.max(np.abs(pulled - avg(p)), axis=(1, 2))
    stats = {"nfev": integ.nfev, "steps": integ.nsteps, "rtol": rtol, "atol": atol, "method": method}
    return IsotopyResult(fmap, float(res.max()), stats, p, imgs, jacs, res)


# ----------------------------------------------------------------------
# first-order analysis
def _richardson(fn, h):
    d1 = (fn(h) - fn(-h)) * (1.0 / (2 * h))
    d2 = (fn(h / 2) - fn(-h / 2)) * (1.0 / h)
    return (d2 * 4.0 - d1) * (1.0 / 3.0)


@dataclass
class CocyclePair:
    """First-order data: ``Lambda_0``, its averaged counterpart and the witness ``w``."""

    Lam0: Field
    Lam0_avg: Field
    w: Field
    residuals: dict


def first_order_cocycles(family: DeformationFamily, Q: Field, samples, step: float = 1e-4,
                         t_nodes: int = 16) -> CocyclePair:
    """Cocycles ``Lambda_0``, ``(I - P dQ) Lambda_0 (I - dQ P)`` and the coboundary witness.

    ``w = -int_0^1 W_t dt`` with ``W_t = d/deps Z_{eps,t}`` at ``eps = 0``;
    the residual of ``avg Lambda_0 - Lambda_0 - L_w P`` is reported together
    with ``[[P, Lambda_0]]`` and ``[[P, avg Lambda_0]]``.
    """
    from .calculus import schouten_bivector_bivector

    p = as_points(samples, family.dim)
    n = family.dim
    dQ = exterior_derivative(Q)
    P = family.P
    lam0 = _richardson(lambda e: family.eval(e) if e != 0 else P, step)
    lam0 = DerivedField("bivector", n, lam0.at, max_order=lam0.max_order, name="Lambda0")

    def avg_fn(q):
        dq = dQ.at(q)
        pq = P.at(q)
        left = np.eye(n) - J.matmul(pq, dq)
        right = np.eye(n) - J.matmul(dq, pq)
        return J.matmul(J.matmul(left, lam0.at(q)), right)

    lam_avg = DerivedField("bivector", n, avg_fn, max_order=min(lam0.max_order, dQ.max_order),
                           name="avg Lambda0")
    rule = gauss_legendre(t_nodes, 0.0, 1.0)
    w = None
    for t, wt in zip(rule.nodes, rule.weights):
        wt_field = _richardson(lambda e, t=t: moser_field(family, Q, e, t, dQ), step)
        term = wt_field * float(-wt)
        w = term if w is None else w + term
    w = DerivedField("vector", n, w.at, max_order=w.max_order, name="w")
    res = {
        "cocycle": float(np.max(np.abs(schouten_bivector_bivector(P, lam0)(p)))),
        "cocycle_avg": float(np.max(np.abs(schouten_bivector_bivector(P, lam_avg)(p)))),
        "coboundary": float(np.max(np.abs(lam_avg(p) - lam0(p) - lie_derivative(w, P)(p)))),
    }
    return CocyclePair(lam0, lam_avg, w, res)


def remainder_fit(family: DeformationFamily, Q: Field, pair: CocyclePair, samples,
                  eps_grid=(0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08)):
    """Least-squares fit ``log r = log C + k log eps`` for ``r = |avg - P - eps avg Lambda_0|``.

    Returns ``(C, k, remainders)``.
    """
    p = as_points(samples, family.dim)
    dQ = exterior_derivative(Q)
    base = family.P(p)
    la = pair.Lam0_avg(p)
    r = []
    for e in eps_grid:
        avg = gauge_family_field(family, Q, e, 1.0, dQ)(p)
        r.append(float(np.max(np.abs(avg - base - e * la))))
    r = np.array(r)
    if np.any(r <= 0.0):  # exact first-order structure: no exponent to fit
        return 0.0, float("nan"), r
    k, logc = np.polyfit(np.log(eps_grid), np.log(r), 1)
    return float(np.exp(logc)), float(k), r


def moser_scaling(family: DeformationFamily, Q: Field, samples,
                  eps_grid=(0.01, 0.02, 0.04, 0.06, 0.08, 0.1), t_grid=(0.0, 0.5, 1.0)):
    """Sup norm of ``Z_{eps,t}`` and the fit ``|Z| ~ C eps^k``; returns ``(C, k, norms)``."""
    p = as_points(samples, family.dim)
    dQ = exterior_derivative(Q)
    norms = []
    for e in eps_grid:
        norms.append(max(float(np.max(np.abs(moser_field(family, Q, e, t, dQ)(p)))) for t in t_grid))
    norms = np.array(norms)
    k, logc = np.polyfit(np.log(eps_grid), np.log(norms), 1)
    c = float(np.max(norms / np.asarray(eps_grid)))
    return c, float(k), norms


# ----------------------------------------------------------------------
# validated range
def gauge_is_degenerate(family: DeformationFamily, Q: Field, eps: float, points,
                        dQ: Field | None = None, margin: float = 1e-9) -> bool:
    """Whether ``I + t dQ Pi_eps`` is singular for some ``t`` in ``[0, 1]`` at a point.

    For a fixed point this happens exactly when ``dQ Pi_eps`` has a real
    eigenvalue ``lambda <= -1`` (then ``t = -1/lambda``).  A determinant test
    would not work: ``det(I + t A)`` with ``A`` a product of two
    antisymmetric matrices is a perfect square and never changes sign.
    """
    p = as_points(points, family.dim)
    dQ = exterior_derivative(Q) if dQ is None else dQ
    a = dQ(p) @ family.eval(eps)(p)
    lam = np.linalg.eigvals(a)
    real = np.abs(lam.imag) <= 1e-9 * np.maximum(1.0, np.abs(lam))
    return bool(np.any(real & (lam.real <= -1.0 + margin)))


def find_eps_max(family: DeformationFamily, Q: Field, points, eps_hi: float = 1.0,
                 scan: int = 40, bisections: int = 40):
    """Largest ``eps`` (up to ``eps_hi``) with a nondegenerate gauge path on the points.

    A uniform scan locates the first degenerate value, then bisection
    refines the threshold.  Returns ``(eps_max, bounded)`` where ``bounded``
    is False when no degeneracy was found up to ``eps_hi``.
    """
    dQ = exterior_derivative(Q)
    grid = np.linspace(0.0, eps_hi, scan + 1)[1:]
    lo = 0.0
    hi = None
    for e in grid:
        if gauge_is_degenerate(family, Q, e, points, dQ):
            hi = float(e)
            break
        lo = float(e)
    if hi is None:
        return float(eps_hi), False
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if gauge_is_degenerate(family, Q, mid, points, dQ):
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-12 * max(1.0, hi):
            break
    return lo, True
