"""Geometry adapted to a coordinate-aligned foliation.

Coordinates are ordered ``(x^1..x^{n_V}, xi^1..xi^{n_H})``; the leaves are
the level sets of ``xi``.  A :class:`Connection` is given by coefficients
``Gamma^alpha_i`` and defines the horizontal frame
``h_i = d/dxi^i - Gamma^alpha_i d/dx^alpha``.  With ``U = [I; 0]`` and
``L = [0; I]`` the adapted frame is ``E = [U | L - U Gamma]`` and its inverse
is ``E^{-1} = I + U Gamma L^T``; the coframe is
``theta^alpha = dx^alpha + Gamma^alpha_i dxi^i`` together with ``dxi^i``.

Bidegrees count horizontal slots first: a one-form in the span of
``dxi`` (the annihilator of the leaves) has bidegree (1, 0), a bivector in
``wedge^2 H`` has bidegree (2, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import jets as J
from .calculus import PointJetField, exterior_derivative, lie_derivative
from .errors import CouplingDegeneracyError
from .fields import ConstantField, DerivedField, Field, FunctionField, as_points
from .jets import Jet

__all__ = [
    "FoliatedChart",
    "Connection",
    "BigradedBivector",
    "AlmostCouplingReport",
    "CouplingReport",
    "bigrade_bivector",
    "bigrade_oneform",
    "bigraded_component",
    "almost_coupling_report",
    "is_coupling",
    "induced_connection",
    "curvature",
    "curvature_field",
    "coupling_form",
    "coupling_form_field",
    "d_bigraded",
    "horizontal_lift",
    "horizontal_vector_fields",
    "poisson_connection_residual",
    "curvature_identity_residual",
    "RANK_RTOL",
]

RANK_RTOL = 1e-9


def numerical_rank(m, rtol: float = RANK_RTOL) -> int:
    """Rank from singular values with a threshold relative to the largest."""
    s = np.linalg.svd(np.atleast_2d(m), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


@dataclass(frozen=True)
class FoliatedChart:
    """Coordinate split into ``n_v`` leaf coordinates and ``n_h`` transverse ones."""

    n_v: int
    n_h: int

    def __post_init__(self):
        if self.n_v < 1 or self.n_h < 1:
            raise ValueError("a foliated chart needs n_v >= 1 and n_h >= 1")

    @property
    def n(self) -> int:
        return self.n_v + self.n_h

    @property
    def U(self) -> np.ndarray:
        """Embedding of the vertical coordinates, ``n x n_v``."""
        return np.vstack([np.eye(self.n_v), np.zeros((self.n_h, self.n_v))])

    @property
    def L(self) -> np.ndarray:
        """Embedding of the transverse coordinates, ``n x n_h``."""
        return np.vstack([np.zeros((self.n_v, self.n_h)), np.eye(self.n_h)])

    def x(self, points):
        return as_points(points, self.n)[:, : self.n_v]

    def xi(self, points):
        return as_points(points, self.n)[:, self.n_v:]


class Connection:
    """Normal bundle of the foliation given by connection coefficients.

    Parameters
    ----------
    chart : FoliatedChart
    gamma : Field
        Tensor field with component shape ``(n_v, n_h)``.
    """

    def __init__(self, chart: FoliatedChart, gamma: Field, name="conn"):
        if gamma.comp_shape != (chart.n_v, chart.n_h) or gamma.dim != chart.n:
            raise ValueError("connection coefficients must have shape (n_v, n_h)")
        self.chart = chart
        self.gamma = gamma
        self.name = name
        self._U = chart.U
        self._L = chart.L

    @classmethod
    def zero(cls, chart):
        return cls(chart, ConstantField("tensor", chart.n, np.zeros((chart.n_v, chart.n_h))), "flat0")

    @classmethod
    def constant(cls, chart, b):
        return cls(chart, ConstantField("tensor", chart.n, np.asarray(b, float)), "const")

    @classmethod
    def from_formula(cls, chart, fn, name="conn"):
        """Coefficients from ``fn(x) -> nested list (n_v x n_h)``."""
        return cls(chart, FunctionField("tensor", chart.n, fn, shape=(chart.n_v, chart.n_h)), name)

    # jets of frame objects -------------------------------------------
    def gamma_at(self, q: Jet):
        return self.gamma.at(q)

    def _ugl(self, q):
        return J.matmul(J.matmul(self._U, self.gamma.at(q)), self._L.T)

    def frame(self, q: Jet):
        """Adapted frame ``E`` (columns ``d/dx^alpha`` then ``h_i``)."""
        return np.eye(self.chart.n) - self._ugl(q)

    def coframe(self, q: Jet):
        """Inverse frame ``E^{-1}``; rows are ``theta^alpha`` then ``dxi^i``."""
        return np.eye(self.chart.n) + self._ugl(q)

    def projector(self, q: Jet):
        """Vertical projector ``gamma`` onto the leaves along ``H``."""
        return self._U @ self._U.T + self._ugl(q)

    def horizontal_frame(self, q: Jet):
        """Columns ``h_i`` as an ``n x n_h`` matrix."""
        return self._L - J.matmul(self._U, self.gamma.at(q))

    # numeric helpers -------------------------------------------------
    def _vals(self, fn, points):
        p = as_points(points, self.chart.n)
        out = fn(J.seed(p, 0))
        out = out.v if isinstance(out, Jet) else np.broadcast_to(out, (p.shape[0],) + np.shape(out))
        return np.asarray(out)

    def frame_values(self, points):
        return self._vals(self.frame, points)

    def coframe_values(self, points):
        return self._vals(self.coframe, points)

    def projector_values(self, points):
        return self._vals(self.projector, points)

    def horizontal_values(self, points):
        return self._vals(self.horizontal_frame, points)

    def idempotence_residual(self, points) -> float:
        g = self.projector_values(points)
        return float(np.max(np.abs(g @ g - g)))


def horizontal_vector_fields(conn: Connection):
    """The frame fields ``h_i`` as vector fields."""
    n = conn.chart.n
    return [
        DerivedField("vector", n, lambda q, i=i: conn.horizontal_frame(q)[..., i],
                     max_order=conn.gamma.max_order, name=f"h{i + 1}")
        for i in range(conn.chart.n_h)
    ]


# ----------------------------------------------------------------------
# bigrading
@dataclass
class BigradedBivector:
    """Blocks of a bivector in the adapted frame, batched over points.

    ``p20`` is ``(B, n_h, n_h)``, ``p11`` is ``(B, n_h, n_v)`` with entries
    ``Pi(theta-free) `` components ``Pi~^{h_i, x_alpha}``, ``p02`` is
    ``(B, n_v, n_v)``.
    """

    p20: np.ndarray
    p11: np.ndarray
    p02: np.ndarray
    frame: np.ndarray = field(repr=False)

    def reassemble(self) -> np.ndarray:
        """Coordinate components rebuilt from the blocks."""
        nh, nv = self.p11.shape[-2:]
        b = self.p20.shape[0]
        n = nh + nv
        t = np.zeros((b, n, n))
        t[:, :nv, :nv] = self.p02
        t[:, nv:, nv:] = self.p20
        t[:, nv:, :nv] = self.p11
        t[:, :nv, nv:] = -np.swapaxes(self.p11, -1, -2)
        e = self.frame
        return e @ t @ np.swapaxes(e, -1, -2)


def _frame_bivector(Pi_q, einv):
    return J.matmul(J.matmul(einv, Pi_q), einv.swapaxes(-1, -2) if isinstance(einv, Jet) else np.swapaxes(einv, -1, -2))


def bigrade_bivector(Pi: Field, conn: Connection, points) -> BigradedBivector:
    """Blocks of ``Pi`` in the frame ``(d/dx^alpha, h_i)`` at points."""
    p = as_points(points, conn.chart.n)
    q = J.seed(p, 0)
    einv = conn.coframe(q)
    pt = J.value(_frame_bivector(Pi.at(q), einv))
    nv = conn.chart.n_v
    return BigradedBivector(
        p20=pt[:, nv:, nv:], p11=pt[:, nv:, :nv], p02=pt[:, :nv, :nv],
        frame=np.broadcast_to(J.value(conn.frame(q)), pt.shape).copy(),
    )


def bigrade_oneform(mu: Field, conn: Connection, points):
    """Split ``mu = mu_{1,0} + mu_{0,1}``; returns coordinate components."""
    p = as_points(points, conn.chart.n)
    m10 = bigraded_component(mu, conn, 1)(p)
    m01 = bigraded_component(mu, conn, 0)(p)
    return m10, m01


_RANKS = {"scalar": 0, "oneform": 1, "twoform": 2, "threeform": 3, "bivector": 2}


def _horizontal_mask(chart: FoliatedChart, rank: int, s: int) -> np.ndarray:
    n, nv = chart.n, chart.n_v
    mask = np.zeros((n,) * rank)
    for idx in product(range(n), repeat=rank):
        if sum(i >= nv for i in idx) == s:
            mask[idx] = 1.0
    return mask


def _to_frame(kind, a, e, einv):
    if kind == "scalar":
        return a
    if kind == "oneform":
        return J.einsum("li,l->i", e, a)
    if kind == "twoform":
        return J.einsum("ai,ab->ib", e, J.einsum("ab,bj->aj", a, e))
    if kind == "threeform":
        t = J.einsum("ai,abc->ibc", e, a)
        t = J.einsum("bj,ibc->ijc", e, t)
        return J.einsum("ck,ijc->ijk", e, t)
    if kind == "bivector":
        return J.matmul(J.matmul(einv, a), einv.swapaxes(-1, -2))
    raise ValueError(f"bigrading not defined for kind {kind!r}")


def _from_frame(kind, a, e, einv):
    if kind == "scalar":
        return a
    if kind == "oneform":
        return J.einsum("li,l->i", einv, a)
    if kind == "twoform":
        return J.einsum("ai,ab->ib", einv, J.einsum("ab,bj->aj", a, einv))
    if kind == "threeform":
        t = J.einsum("ai,abc->ibc", einv, a)
        t = J.einsum("bj,ibc->ijc", einv, t)
        return J.einsum("ck,ijc->ijk", einv, t)
    if kind == "bivector":
        return J.matmul(J.matmul(e, a), e.swapaxes(-1, -2))
    raise ValueError(f"bigrading not defined for kind {kind!r}")


def bigraded_component(alpha: Field, conn: Connection, s: int) -> Field:
    """Component of a form (or bivector) with ``s`` horizontal slots.

    Returned in coordinates, so that ``sum_s bigraded_component(alpha, s)``
    reproduces ``alpha``.
    """
    if alpha.kind not in _RANKS:
        raise ValueError(f"bigrading not defined for kind {alpha.kind!r}")
    rank = _RANKS[alpha.kind]
    if not 0 <= s <= rank:
        raise ValueError(f"no component with {s} horizontal slots for rank {rank}")
    mask = _horizontal_mask(conn.chart, rank, s)

    def fn(q):
        e, einv = conn.frame(q), conn.coframe(q)
        t = _to_frame(alpha.kind, alpha.at(q), e, einv)
        return _from_frame(alpha.kind, t * mask, e, einv)

    return DerivedField(alpha.kind, alpha.dim, fn,
                        max_order=min(alpha.max_order, conn.gamma.max_order),
                        name=f"{alpha.name}[{s},{rank - s}]")


# ----------------------------------------------------------------------
# predicates
@dataclass
class AlmostCouplingReport:
    is_almost_coupling: bool
    sup_mixed: float


def almost_coupling_report(Pi: Field, conn: Connection, sample, tol: float = 1e-10) -> AlmostCouplingReport:
    """Sup of the mixed block over the sample, compared with ``tol``."""
    blocks = bigrade_bivector(Pi, conn, sample)
    sup = float(np.max(np.abs(blocks.p11))) if blocks.p11.size else 0.0
    return AlmostCouplingReport(sup < tol, sup)


def induced_connection(Pi: Field, chart: FoliatedChart) -> Connection:
    """Connection whose horizontal bundle is ``Pi^#(span dxi)``.

    With ``Y = Pi^# dxi = Pi^T L`` split into ``Y_x`` and ``Y_xi``,
    ``Gamma = -Y_x Y_xi^{-1}``.
    """
    U, L = chart.U, chart.L

    def fn(q):
        y = J.matmul(Pi.at(q).swapaxes(-1, -2), L)
        yx = J.matmul(U.T, y)
        yxi = J.matmul(L.T, y)
        return -J.matmul(yx, J.inv(yxi))

    gamma = DerivedField("tensor", chart.n, fn, shape=(chart.n_v, chart.n_h),
                         max_order=Pi.max_order, name=f"H({Pi.name})")
    return Connection(chart, gamma, name=f"H({Pi.name})")


@dataclass
class CouplingReport:
    coupling: bool
    status: str
    connection: Connection | None
    min_transverse_ratio: float


def is_coupling(Pi: Field, chart: FoliatedChart, sample, tol: float = RANK_RTOL) -> CouplingReport:
    """Test whether ``Pi^#(span dxi)`` is a normal bundle at every sample point."""
    p = as_points(sample, chart.n)
    y = np.swapaxes(Pi(p), -1, -2) @ chart.L
    worst = np.inf
    status = "coupling"
    for yb in y:
        s_all = np.linalg.svd(yb, compute_uv=False)
        if s_all[0] == 0.0:
            return CouplingReport(False, "not coupling", None, 0.0)
        s_t = np.linalg.svd(yb[chart.n_v:], compute_uv=False)
        ratio = s_t[-1] / s_all[0]
        worst = min(worst, ratio)
        if ratio <= tol:
            status = "almost-coupling candidate, not coupling"
    if status != "coupling":
        return CouplingReport(False, status, None, float(worst))
    return CouplingReport(True, status, induced_connection(Pi, chart), float(worst))


# ----------------------------------------------------------------------
# curvature and coupling form
def curvature_field(conn: Connection) -> Field:
    """``R^alpha_{ij}`` as a tensor field of shape ``(n_v, n_h, n_h)``.

    ``R^alpha_{ij} = d_{xi_i} Gamma^alpha_j - d_{xi_j} Gamma^alpha_i
    - Gamma^beta_i d_{x_beta} Gamma^alpha_j + Gamma^beta_j d_{x_beta} Gamma^alpha_i``,
    which is minus the vertical part of ``[h_i, h_j]``.
    """
    nv, nh = conn.chart.n_v, conn.chart.n_h

    def fn(points, order):
        gj = conn.gamma.jet(points, order + 1)
        dg = J.partials(gj)  # dg[..., a, i, l] = d_l Gamma^a_i
        g0 = gj.truncate(order)
        dxi = dg[..., nv:]  # [..., a, j, i] = d_{xi_i} Gamma^a_j
        dx = dg[..., :nv]  # [..., a, j, b] = d_{x_b} Gamma^a_j
        t = dxi.swapaxes(-1, -2)  # [..., a, i, j] = d_{xi_i} Gamma^a_j
        r = t - t.swapaxes(-1, -2)
        m = J.einsum("bi,ajb->aij", g0, dx)  # Gamma^b_i d_b Gamma^a_j
        return r - m + m.swapaxes(-1, -2)

    return PointJetField("tensor", conn.chart.n, fn, shape=(nv, nh, nh),
                         max_order=conn.gamma.max_order - 1, name=f"R({conn.name})")


def curvature(conn: Connection, points) -> np.ndarray:
    """Curvature components at points, shape ``(B, n_v, n_h, n_h)``."""
    return curvature_field(conn)(as_points(points, conn.chart.n))


def _horizontal_block(Pi: Field, conn: Connection):
    nv = conn.chart.n_v

    def fn(q):
        pt = _frame_bivector(Pi.at(q), conn.coframe(q))
        return pt[..., nv:, nv:]

    return fn


def coupling_form_field(Pi: Field, conn: Connection, check_points=None) -> Field:
    """Coupling form ``sigma = -(Pi_{2,0})^{-1}`` as a tensor field ``(n_h, n_h)``.

    Components are taken on the horizontal frame; in coordinates the form is
    ``sigma_{ij} dxi^i ^ dxi^j`` (the annihilator of the leaves is spanned by
    ``dxi``).
    """
    block = _horizontal_block(Pi, conn)

    def fn(q):
        s = -J.inv(block(q))
        return 0.5 * (s - s.swapaxes(-1, -2))

    nh = conn.chart.n_h
    return DerivedField("tensor", conn.chart.n, fn, shape=(nh, nh),
                        max_order=min(Pi.max_order, conn.gamma.max_order),
                        name=f"sigma({Pi.name})")


def coupling_form(Pi: Field, conn: Connection, points) -> np.ndarray:
    """Coupling form at points; raises on a singular horizontal block."""
    p = as_points(points, conn.chart.n)
    blk = J.value(_horizontal_block(Pi, conn)(J.seed(p, 0)))
    for i, m in enumerate(blk):
        s = np.linalg.svd(m, compute_uv=False)
        if s[0] == 0.0 or s[-1] <= RANK_RTOL * s[0]:
            cond = np.inf if s[-1] == 0.0 else s[0] / s[-1]
            raise CouplingDegeneracyError(cond, p[i])
    return coupling_form_field(Pi, conn)(p)


def sigma_as_twoform(sigma: Field, chart: FoliatedChart) -> Field:
    """Embed horizontal-frame components as the coordinate form ``L s L^T``."""
    L = chart.L
    return DerivedField("twoform", chart.n, lambda q: J.matmul(J.matmul(L, sigma.at(q)), L.T),
                        max_order=sigma.max_order, name=sigma.name)


_SELECTORS = {(1, 0), (0, 1), (2, -1)}


def d_bigraded(alpha: Field, conn: Connection, selector) -> Field:
    """Bigraded piece ``d_{a,b} alpha`` of the exterior derivative.

    Each bigraded component ``alpha_{s,l}`` is differentiated and the result
    is projected onto bidegree ``(s + a, l + b)``.
    """
    sel = tuple(selector)
    if sel not in _SELECTORS:
        raise ValueError(f"invalid bidegree selector {sel}; use (1,0), (0,1) or (2,-1)")
    if alpha.kind not in ("scalar", "oneform", "twoform"):
        raise ValueError("d_bigraded expects a 0-, 1- or 2-form")
    rank = _RANKS[alpha.kind]
    a = sel[0]
    pieces = []
    for s in range(rank + 1):
        target = s + a
        if not 0 <= target <= rank + 1:
            continue
        ds = exterior_derivative(bigraded_component(alpha, conn, s))
        pieces.append(bigraded_component(ds, conn, target))
    if not pieces:
        zero_kind = {0: "oneform", 1: "twoform", 2: "threeform"}[rank]
        return ConstantField(zero_kind, alpha.dim, 0.0)
    out = pieces[0]
    for pc in pieces[1:]:
        out = out + pc
    return out


def horizontal_lift(psi: Field, conn: Connection) -> Field:
    """Bivector ``sum psi^{ij} h_i ^ h_j / 2 = H psi H^T`` from ``(n_h, n_h)`` components."""

    def fn(q):
        h = conn.horizontal_frame(q)
        ps = psi.at(q)
        ps = 0.5 * (ps - ps.swapaxes(-1, -2))
        ht = h.swapaxes(-1, -2) if isinstance(h, Jet) else np.swapaxes(h, -1, -2)
        return J.matmul(J.matmul(h, ps), ht)

    return DerivedField("bivector", conn.chart.n, fn,
                        max_order=min(psi.max_order, conn.gamma.max_order),
                        name=f"hor({psi.name})")


def poisson_connection_residual(P: Field, conn: Connection, sample) -> float:
    """Sup of ``|L_{h_i} P|`` over the sample and the frame fields."""
    p = as_points(sample, conn.chart.n)
    return float(max(np.max(np.abs(lie_derivative(h, P)(p))) for h in horizontal_vector_fields(conn)))


def curvature_identity_residual(P: Field, conn: Connection, sigma: Field, sample) -> float:
    """Residual of the curvature identity relating ``R`` and ``d sigma``.

    Evaluates ``R^alpha_{ij} + P^{alpha beta} d_{x_beta} sigma_{ij}``, i.e. the
    curvature plus the leafwise Hamiltonian vector field of the coupling
    form components, contracted through the second index of ``P``.
    """
    p = as_points(sample, conn.chart.n)
    nv = conn.chart.n_v
    r = curvature(conn, p)
    ds = np.moveaxis(sigma.jet(p, 1).g, 0, -1)[..., :nv]  # [B, i, j, beta]
    pv = P(p)[:, :nv, :nv]
    ham = np.einsum("zab,zijb->zaij", pv, ds)
    return float(np.max(np.abs(r + ham)))
