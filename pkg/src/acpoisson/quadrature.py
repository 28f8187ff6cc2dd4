"""Quadrature rules for circle and interval integrals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["QuadratureRule", "periodic", "gauss_legendre", "tensor_product"]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class QuadratureRule:
    """Abscissae and weights on an interval.

    Attributes
    ----------
    nodes : ndarray
    weights : ndarray
    kind : str
        ``"periodic-uniform"`` or ``"gauss-legendre"``.
    interval : tuple of float
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    interval: tuple = (0.0, TWO_PI)

    def __post_init__(self):
        if len(self.nodes) < 2 or len(self.nodes) != len(self.weights):
            raise ValueError("a quadrature rule needs at least two nodes and matching weights")
        length = self.interval[1] - self.interval[0]
        if abs(float(np.sum(self.weights)) - length) > 1e-12 * max(1.0, abs(length)):
            raise ValueError("weights must sum to the interval length")

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def length(self) -> float:
        return self.interval[1] - self.interval[0]

    def integrate(self, values, axis: int = 0):
        """Weighted sum of sampled values along ``axis``."""
        v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
        return np.tensordot(self.weights, v, axes=(0, 0))


def periodic(n: int = 64, a: float = 0.0, b: float = TWO_PI) -> QuadratureRule:
    """Trapezoidal rule for periodic integrands on ``[a, b)``."""
    h = (b - a) / n
    return QuadratureRule(a + h * np.arange(n), np.full(n, h), "periodic-uniform", (a, b))


def gauss_legendre(n: int = 32, a: float = 0.0, b: float = 1.0) -> QuadratureRule:
    """Gauss-Legendre rule mapped to ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return QuadratureRule(a + half * (x + 1.0), half * w, "gauss-legendre", (a, b))


def tensor_product(rules):
    """Nodes ``(M, k)`` and weights ``(M,)`` of a product of rules."""
    grids = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r.weights for r in rules], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
    return nodes, weights
