"""Pointwise linear Dirac geometry.

A Dirac subspace at a point is an ``n``-dimensional subspace of
``T_q M + T*_q M`` that is maximally isotropic for the pairing
``<(X, alpha), (Y, beta)> = alpha(Y) + beta(X)``.  It is stored as a
``2n x n`` basis matrix whose first ``n`` rows hold tangent components.

The graph of a bivector ``Pi`` is ``{(sharp(Pi, alpha), alpha)}`` with the
first-slot contraction of :mod:`calculus`, so its basis is ``[Pi^T; I]``.
The gauge transformation by a two-form ``B`` maps ``(X, alpha)`` to
``(X, alpha - i_X B) = (X, alpha - B^T X)``; on graphs it acts as
``Pi -> Pi (I - B Pi)^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import GaugeDegeneracyError, NotAGraphError, SplittingError
from .foliation import RANK_RTOL, FoliatedChart, numerical_rank

__all__ = [
    "DiracSubspace",
    "DiracSplitting",
    "DiracField",
    "graph_of_poisson",
    "gauge_subspace",
    "is_graph",
    "extract_poisson",
    "gauge_poisson",
    "split_D",
    "horizontal_distribution",
    "principal_angles",
    "max_principal_angle",
    "same_subspace",
    "EQUALITY_TOL",
]

EQUALITY_TOL = 1e-8


def _antisym(m):
    return 0.5 * (m - np.swapaxes(m, -1, -2))


def principal_angles(a, b) -> np.ndarray:
    """Principal angles between the column spans of ``a`` and ``b``."""
    a = np.atleast_2d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    if a.shape[1] == 0 or b.shape[1] == 0:
        return np.zeros(0)
    return sla.subspace_angles(a, b)


def max_principal_angle(a, b) -> float:
    """Largest principal angle; ``pi/2`` when the spans differ in dimension."""
    ra, rb = numerical_rank(a), numerical_rank(b)
    if ra != rb:
        return float(np.pi / 2)
    if ra == 0:
        return 0.0
    return float(np.max(principal_angles(sla.orth(a, rcond=RANK_RTOL), sla.orth(b, rcond=RANK_RTOL))))


def same_subspace(a, b, tol: float = EQUALITY_TOL) -> bool:
    return max_principal_angle(a, b) < tol


@dataclass
class DiracSubspace:
    """Maximally isotropic subspace with a ``2n x n`` basis."""

    basis: np.ndarray

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float)
        if self.basis.ndim != 2 or self.basis.shape[0] != 2 * self.basis.shape[1]:
            raise ValueError("basis must have shape (2n, n)")

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    @property
    def tangent(self) -> np.ndarray:
        return self.basis[: self.n]

    @property
    def cotangent(self) -> np.ndarray:
        return self.basis[self.n:]

    def rank(self) -> int:
        return numerical_rank(self.basis)

    def pairing_matrix(self) -> np.ndarray:
        x, a = self.tangent, self.cotangent
        return a.T @ x + x.T @ a

    def isotropy_defect(self) -> float:
        """Max entry of the pairing on an orthonormalized basis."""
        q = self.orthonormal().basis
        x, a = q[: self.n], q[self.n:]
        return float(np.max(np.abs(a.T @ x + x.T @ a)))

    def orthonormal(self) -> "DiracSubspace":
        q, _ = np.linalg.qr(self.basis)
        return DiracSubspace(q)

    def change_basis(self, m) -> "DiracSubspace":
        return DiracSubspace(self.basis @ np.asarray(m, float))

    def angle_to(self, other: "DiracSubspace") -> float:
        return max_principal_angle(self.basis, other.basis)

    def equals(self, other: "DiracSubspace", tol: float = EQUALITY_TOL) -> bool:
        return self.angle_to(other) < tol

    def pullback(self, jac) -> "DiracSubspace":
        """Pull back by a diffeomorphism with jacobian ``jac`` at the point.

        The subspace is given at the image point; tangent parts map by
        ``J^{-1}`` and cotangent parts by ``J^T``.
        """
        jac = np.asarray(jac, float)
        x = np.linalg.solve(jac, self.tangent)
        a = jac.T @ self.cotangent
        return DiracSubspace(np.vstack([x, a]))


@dataclass
class DiracSplitting:
    """Intersections ``D_H = D n (H + V0)`` and ``D_V = D n (V + H0)``."""

    D_H: np.ndarray
    D_V: np.ndarray
    P: np.ndarray


def graph_of_poisson(Pi_q) -> DiracSubspace:
    """Graph of a bivector: columns ``(sharp(Pi, e_j), e_j) = (-Pi e_j, e_j)``."""
    Pi_q = np.asarray(Pi_q, float)
    n = Pi_q.shape[0]
    return DiracSubspace(np.vstack([Pi_q.T, np.eye(n)]))


def gauge_subspace(D: DiracSubspace, B_q) -> DiracSubspace:
    """Gauge transformation ``(X, alpha) -> (X, alpha - i_X B)``."""
    B_q = np.asarray(B_q, float)
    x, a = D.tangent, D.cotangent
    return DiracSubspace(np.vstack([x, a - B_q.T @ x]))


def is_graph(D: DiracSubspace, rtol: float = RANK_RTOL) -> bool:
    """True iff the cotangent block has full rank.

    The threshold is relative to the largest singular value of the whole
    (orthonormalized) basis, so it does not depend on the representation.
    """
    q = D.orthonormal().basis
    s = np.linalg.svd(q[D.n:], compute_uv=False)
    return bool(s[-1] > rtol)


def extract_poisson(D: DiracSubspace) -> np.ndarray:
    """The bivector whose graph is ``D``; raises :class:`NotAGraphError`."""
    if not is_graph(D):
        raise NotAGraphError(numerical_rank(D.orthonormal().basis[D.n:]), D.n)
    # D = {(Pi^T a, a)}: Pi^T = X A^{-1}
    pit = np.linalg.solve(D.cotangent.T, D.tangent.T).T
    return _antisym(pit.T)


def gauge_poisson(Pi_q, B_q, rtol: float = RANK_RTOL) -> np.ndarray:
    """``Pi (I - B Pi)^{-1}``; raises :class:`GaugeDegeneracyError` when singular."""
    Pi_q = np.asarray(Pi_q, float)
    B_q = np.asarray(B_q, float)
    m = np.eye(Pi_q.shape[0]) - B_q @ Pi_q
    s = np.linalg.svd(m, compute_uv=False)
    # I - B Pi can vanish entirely, so the scale is at least that of I
    if s[-1] <= rtol * max(s[0], 1.0):
        raise GaugeDegeneracyError(s[-1])
    return _antisym(np.linalg.solve(m.T, Pi_q.T).T)


def _frame_parts(chart: FoliatedChart, gamma_q):
    g = np.asarray(gamma_q, float).reshape(chart.n_v, chart.n_h)
    U, L = chart.U, chart.L
    einv = np.eye(chart.n) + U @ g @ L.T
    H = L - U @ g
    return U, L, einv, H


def _intersection(D: DiracSubspace, constraints) -> np.ndarray:
    ns = sla.null_space(constraints @ D.basis, rcond=RANK_RTOL) if constraints.size else np.eye(D.n)
    return D.basis @ ns


def split_D(D: DiracSubspace, chart: FoliatedChart, gamma_q) -> DiracSplitting:
    """Split ``D`` along the normal bundle given by ``gamma_q`` at the point.

    Returns ``D_H``, ``D_V`` (as ``2n x r`` bases) and the leaf-tangent
    bivector ``P`` recovered from ``D_V = {(sharp(P, eta), eta)}``.
    """
    n, nv, nh = chart.n, chart.n_v, chart.n_h
    U, L, einv, H = _frame_parts(chart, gamma_q)
    z = np.zeros((nv, n))
    # (X, a) in H + V0  <=>  theta(X) = 0 and a(d/dx) = 0
    c_h = np.vstack([np.hstack([U.T @ einv, z]), np.hstack([z, U.T])])
    # (X, a) in V + H0  <=>  dxi(X) = 0 and a(h_i) = 0
    zh = np.zeros((nh, n))
    c_v = np.vstack([np.hstack([L.T, zh]), np.hstack([zh, H.T])])
    dh = _intersection(D, c_h)
    dv = _intersection(D, c_v)
    rh, rv = numerical_rank(dh) if dh.size else 0, numerical_rank(dv) if dv.size else 0
    if rh != nh or rv != nv:
        raise SplittingError(rh, rv, nh, nv)
    xv, av = dv[:n], dv[n:]
    # P^T eta = X with P = U p U^T:  p^T (U^T A) = U^T X
    pt = np.linalg.solve((U.T @ av).T, (U.T @ xv).T).T
    p = _antisym(pt.T)
    return DiracSplitting(dh, dv, U @ p @ U.T)


def horizontal_distribution(D: DiracSubspace, chart: FoliatedChart) -> np.ndarray:
    """Orthonormal basis of ``{X : (X, alpha) in D, alpha in V0}``."""
    U = chart.U
    ns = sla.null_space(U.T @ D.cotangent, rcond=RANK_RTOL)
    if ns.size == 0:
        return np.zeros((D.n, 0))
    x = D.tangent @ ns
    if numerical_rank(np.vstack([x, D.cotangent @ ns])) == 0 or np.max(np.abs(x)) <= RANK_RTOL * max(1.0, np.max(np.abs(D.basis))):
        return np.zeros((D.n, 0))
    return sla.orth(x, rcond=RANK_RTOL)


class DiracField:
    """Field of Dirac subspaces given by a batched basis function.

    Parameters
    ----------
    dim : int
        Chart dimension ``n``.
    basis_fn : callable
        Maps points ``(B, n)`` to bases ``(B, 2n, n)``.
    """

    def __init__(self, dim, basis_fn, name="D"):
        self.dim = int(dim)
        self.basis_fn = basis_fn
        self.name = name

    def bases(self, points) -> np.ndarray:
        return np.asarray(self.basis_fn(np.atleast_2d(np.asarray(points, float))))

    def at(self, points):
        return [DiracSubspace(b) for b in self.bases(points)]

    @classmethod
    def graph(cls, Pi, name=None):
        """Graph of a bivector field."""
        def fn(points):
            pv = Pi(points)
            n = pv.shape[-1]
            eye = np.broadcast_to(np.eye(n), pv.shape)
            return np.concatenate([np.swapaxes(pv, -1, -2), eye], axis=-2)

        return cls(Pi.dim, fn, name=name or f"Graph({Pi.name})")

    def gauge(self, B, name=None):
        """Pointwise gauge transformation by a two-form field ``B``."""
        def fn(points):
            d = self.bases(points)
            b = B(points)
            n = self.dim
            x, a = d[:, :n], d[:, n:]
            return np.concatenate([x, a - np.swapaxes(b, -1, -2) @ x], axis=-2)

        return DiracField(self.dim, fn, name=name or f"tau({self.name})")
