"""Typed failures raised by the library.

Every numerical failure carries the quantity that triggered it, so callers
(and the command-line front end) can report it without re-running.
"""

from __future__ import annotations

import numpy as np


class AcpoissonError(Exception):
    """Base class for all library errors."""


class DimensionError(AcpoissonError, ValueError):
    """Operands live on charts of different dimension."""


class SingularJacobianError(AcpoissonError):
    """A map has a singular jacobian at some point."""

    def __init__(self, point, message="singular jacobian"):
        self.point = np.asarray(point, dtype=float)
        super().__init__(f"{message} at point {self.point.tolist()}")


class NumericalFailure(AcpoissonError):
    """Base class for failures that map to the numerical-failure exit code."""


class GaugeDegeneracyError(NumericalFailure):
    """``I - B Pi`` (or ``I + t dQ Pi``) is singular.

    Attributes
    ----------
    smallest_singular_value : float
        Smallest singular value of the offending matrix.
    point, eps, t : optional
        Location of the failure when known.
    """

    def __init__(self, smallest_singular_value, point=None, eps=None, t=None):
        self.smallest_singular_value = float(smallest_singular_value)
        self.point = None if point is None else np.asarray(point, dtype=float).tolist()
        self.eps = eps
        self.t = t
        where = []
        if point is not None:
            where.append(f"point={self.point}")
        if eps is not None:
            where.append(f"eps={eps}")
        if t is not None:
            where.append(f"t={t}")
        loc = (" (" + ", ".join(where) + ")") if where else ""
        super().__init__(
            f"gauge transformation degenerate: smallest singular value "
            f"{self.smallest_singular_value:.3e}{loc}"
        )


class NotAGraphError(AcpoissonError):
    """A Dirac subspace meets the pure tangent summand nontrivially."""

    def __init__(self, cotangent_rank, dim):
        self.cotangent_rank = int(cotangent_rank)
        self.dim = int(dim)
        super().__init__(
            f"subspace is not the graph of a bivector: cotangent rank "
            f"{self.cotangent_rank} < {self.dim}"
        )


class CouplingDegeneracyError(AcpoissonError):
    """The horizontal block of a bivector is not invertible."""

    def __init__(self, condition_number, point=None):
        self.condition_number = float(condition_number)
        self.point = None if point is None else np.asarray(point, dtype=float).tolist()
        super().__init__(
            f"horizontal block singular: condition number {self.condition_number:.3e}"
            + ("" if point is None else f" at point {self.point}")
        )


class SplittingError(AcpoissonError):
    """A Dirac subspace does not split along the normal bundle."""

    def __init__(self, rank_h, rank_v, n_h, n_v):
        self.rank_h, self.rank_v = int(rank_h), int(rank_v)
        self.n_h, self.n_v = int(n_h), int(n_v)
        super().__init__(
            f"splitting failed: rank D_H = {self.rank_h} (expected {self.n_h}), "
            f"rank D_V = {self.rank_v} (expected {self.n_v})"
        )


class ConstructionError(AcpoissonError):
    """A construction precondition does not hold; carries the residual."""

    def __init__(self, message, residual):
        self.residual = float(residual)
        super().__init__(f"{message}: residual {self.residual:.3e}")


class IntegrationError(NumericalFailure):
    """An ODE integration failed or escaped the configured bound."""

    def __init__(self, message, t_reached=None, trajectory=None):
        self.t_reached = t_reached
        self.trajectory = trajectory
        extra = []
        if trajectory is not None:
            extra.append(f"trajectory {trajectory}")
        if t_reached is not None:
            extra.append(f"t reached {t_reached:.6g}")
        super().__init__(message + (" (" + ", ".join(extra) + ")" if extra else ""))


class NewtonError(NumericalFailure):
    """Newton iteration for an inverse point did not converge."""

    def __init__(self, residual, point=None):
        self.residual = float(residual)
        self.point = None if point is None else np.asarray(point, dtype=float).tolist()
        super().__init__(f"Newton iteration failed, residual {self.residual:.3e}")


class ScenarioError(AcpoissonError, KeyError):
    """Unknown scenario or malformed overrides."""

    def __str__(self):
        return str(self.args[0]) if self.args else "scenario error"
