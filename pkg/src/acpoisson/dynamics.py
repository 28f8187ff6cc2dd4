"""Fibered deformations and slow-fast Hamiltonian dynamics.

A flat connection whose horizontal fields preserve ``P`` turns any Poisson
bivector ``psi`` on the transverse coordinates into the family
``Pi_eps = P + eps hor(psi)``.  Hamiltonian fields are ``X_F = sharp(Pi, dF)``
(components ``dF_i Pi^{ij}``); along the leaves they are O(1) (fast), across
them O(eps) (slow).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import jets as J
from .calculus import SmoothMap, exterior_derivative, jacobi_residual, sharp
from .deformation import DeformationFamily, _IsotopyIntegrator, gauge_family_field
from .errors import ConstructionError, IntegrationError, NewtonError
from .fields import DerivedField, Field, as_points, coordinate_function
from .foliation import Connection, curvature, horizontal_lift, poisson_connection_residual

__all__ = [
    "FiberedDeformation",
    "TrajectoryRecord",
    "ConjugacyReport",
    "build_fibered_deformation",
    "slow_fast_field",
    "simulate",
    "write_trajectory_csv",
    "compare_conjugated_dynamics",
    "invert_map",
    "default_monitors",
]


@dataclass
class FiberedDeformation(DeformationFamily):
    """Family ``P + eps hor(psi)`` with an eps-independent horizontal part."""

    psi: Field | None = None
    hor_psi: Field | None = None
    coupling: bool = False
    residuals: dict = field(default_factory=dict)


def build_fibered_deformation(P: Field, psi: Field, conn: Connection, sample,
                              eps_grid=(0.0, 0.05, 0.1), tol: float = 1e-10,
                              jacobi_tol: float = 1e-9, name="fibered") -> FiberedDeformation:
    """Check flatness and invariance of ``P``, then assemble the family.

    Parameters
    ----------
    psi : Field
        Tensor field of shape ``(n_h, n_h)`` holding ``psi^{ij}``.
    sample : array_like
        Points where the preconditions are checked.

    Raises
    ------
    ConstructionError
        If the curvature, ``L_{h_i} P`` or the Jacobi residual exceeds its
        tolerance.
    """
    p = as_points(sample, conn.chart.n)
    curv = float(np.max(np.abs(curvature(conn, p))))
    if curv > tol:
        raise ConstructionError("connection is not flat", curv)
    inv = poisson_connection_residual(P, conn, p)
    if inv > tol:
        raise ConstructionError("horizontal fields do not preserve P", inv)
    hor = horizontal_lift(psi, conn)
    psi_vals = np.asarray(psi(p))
    det_min = float(np.min(np.abs(np.linalg.det(psi_vals)))) if psi_vals.shape[-1] else 0.0
    fam = FiberedDeformation(P, lambda e: hor, conn, name=name, psi=psi, hor_psi=hor,
                             coupling=det_min > 1e-12)
    jac = max(jacobi_residual(fam.eval(e), p) for e in eps_grid)
    if jac > jacobi_tol:
        raise ConstructionError("deformed bivector fails the Jacobi identity", jac)
    fam.residuals = {"curvature": curv, "poisson_connection": inv, "jacobi": jac, "min_det_psi": det_min}
    return fam


def slow_fast_field(F: Field, Pi: Field) -> Field:
    """Hamiltonian vector field ``sharp(Pi, dF)``."""
    return sharp(Pi, exterior_derivative(F))


def default_monitors(F: Field, chart) -> dict:
    """``F`` and the transverse coordinates (Casimirs of ``P``)."""
    mons = {"F": F}
    for i in range(chart.n_h):
        mons[f"xi{i + 1}"] = coordinate_function(chart.n_v + i, chart.n)
    return mons


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    monitors: dict
    steps: np.ndarray
    nfev: int = 0

    def drift(self, name: str) -> float:
        m = self.monitors[name]
        return float(np.max(np.abs(m - m[0])))


def _vector_rhs(X: Field):
    def rhs(t, y):
        return X(y[None, :])[0]

    return rhs


def simulate(X, q0, T: float, rtol: float = 1e-11, atol: float = 1e-12, monitors=None,
             bound: float = 1e6, max_step: float = np.inf, method: str = "RK45") -> TrajectoryRecord:
    """Adaptive Runge-Kutta trajectory with monitors at every accepted step.

    Parameters
    ----------
    X : Field or callable
        Vector field, or ``rhs(t, y)``.
    monitors : dict, optional
        Name to scalar field.

    Raises
    ------
    IntegrationError
        When the state leaves the box ``|q|_inf <= bound`` or the solver fails.
    """
    if T <= 0 or rtol <= 0 or atol <= 0:
        raise ValueError("horizon and tolerances must be positive")
    rhs = _vector_rhs(X) if isinstance(X, Field) else X
    q0 = np.asarray(q0, float)

    def escape(t, y):
        return bound - np.max(np.abs(y))

    escape.terminal = True
    sol = solve_ivp(rhs, (0.0, float(T)), q0, method=method, rtol=rtol, atol=atol,
                    events=escape, max_step=max_step)
    if sol.status == 1:
        raise IntegrationError("state norm exceeded the bound", t_reached=float(sol.t[-1]))
    if sol.status < 0:
        raise IntegrationError(sol.message, t_reached=float(sol.t[-1]))
    states = sol.y.T
    if not np.all(np.isfinite(states)):
        raise IntegrationError("non-finite state", t_reached=float(sol.t[-1]))
    mons = {}
    for name, f in (monitors or {}).items():
        mons[name] = np.asarray(f(states), float).reshape(len(sol.t))
    steps = np.concatenate([[0.0], np.diff(sol.t)])
    return TrajectoryRecord(sol.t, states, mons, steps, int(sol.nfev))


def write_trajectory_csv(record: TrajectoryRecord, path, chart) -> list:
    """Write ``t, x..., xi..., monitors..., dt`` and return the header."""
    from .verify import atomic_write

    header = ["t"] + [f"x{i + 1}" for i in range(chart.n_v)] + [f"xi{i + 1}" for i in range(chart.n_h)]
    names = list(record.monitors)
    header += [f"mon_{m}" for m in names] + ["dt"]
    rows = [header]
    for k, t in enumerate(record.times):
        row = [repr(float(t))] + [repr(float(v)) for v in record.states[k]]
        row += [repr(float(record.monitors[m][k])) for m in names] + [repr(float(record.steps[k]))]
        rows.append(row)

    def write(fh):
        csv.writer(fh, lineterminator="\n").writerows(rows)

    atomic_write(path, write)
    return header


def invert_map(phi: SmoothMap, target, x0=None, tol: float = 1e-12, max_iter: int = 30) -> np.ndarray:
    """Solve ``phi(p) = target`` by Newton iteration from ``x0`` (default: target)."""
    target = np.asarray(target, float)
    x = target.copy() if x0 is None else np.asarray(x0, float).copy()
    res = np.inf
    for _ in range(max_iter):
        fx = phi(x[None, :])[0]
        r = fx - target
        res = float(np.max(np.abs(r)))
        if res < tol:
            return x
        jm = phi.jacobian_values(x[None, :])[0]
        try:
            x = x - np.linalg.solve(jm, r)
        except np.linalg.LinAlgError:
            raise NewtonError(res, target) from None
    fx = phi(x[None, :])[0]
    res = float(np.max(np.abs(fx - target)))
    if res < 10 * tol:
        return x
    raise NewtonError(res, target)


@dataclass
class ConjugacyReport:
    distance: float
    times: np.ndarray
    original: np.ndarray
    conjugated: np.ndarray
    start_average: np.ndarray
    newton_residual: float
    stats: dict


def compare_conjugated_dynamics(family: DeformationFamily, Q: Field, eps: float, F: Field, q0, T: float,
                                rtol: float = 1e-8, atol: float = 1e-8, iso_tol: float = 1e-9,
                                n_compare: int = 41) -> ConjugacyReport:
    """Compare the ``F``-flow of ``Pi_eps`` with the ``F o phi``-flow of the average.

    With ``phi^* Pi_eps = avg``, the map ``phi`` sends trajectories of the
    averaged system with Hamiltonian ``F o phi`` to trajectories of the
    original one.  The averaged trajectory starts at ``phi^{-1}(q0)``
    (Newton iteration) and its image under ``phi`` is compared with the
    original trajectory at ``n_compare`` equally spaced times.
    """
    n = family.dim
    q0 = np.asarray(q0, float)
    times = np.linspace(0.0, float(T), n_compare)
    pe = family.eval(eps)
    dF = exterior_derivative(F)
    orig = solve_ivp(_vector_rhs(sharp(pe, dF)), (0.0, T), q0, rtol=rtol, atol=atol, t_eval=times)
    if orig.status != 0:
        raise IntegrationError(orig.message, t_reached=float(orig.t[-1]))
    if float(eps) == 0.0:
        return ConjugacyReport(0.0, times, orig.y.T, orig.y.T.copy(), q0, 0.0, {"nfev": int(orig.nfev)})
    integ = _IsotopyIntegrator(family, Q, eps, iso_tol, iso_tol, 1e6)

    def phi_and_jac(x):
        return integ.run(np.asarray(x, float), 0)

    phi = SmoothMap(n, lambda x: np.array([phi_and_jac(r)[0] for r in np.atleast_2d(x)]),
                    lambda x: np.array([phi_and_jac(r)[1] for r in np.atleast_2d(x)]),
                    jet_capable=False, name="phi")
    p0 = invert_map(phi, q0)
    newton_res = float(np.max(np.abs(phi(p0[None, :])[0] - q0)))
    avg = gauge_family_field(family, Q, eps, 1.0)

    def rhs(t, y):
        img, jm = phi_and_jac(y)
        dg = jm.T @ dF(img[None, :])[0]  # d(F o phi) = J^T dF(phi)
        return dg @ avg(y[None, :])[0]  # sharp: components dG_i avg^{ij}

    conj = solve_ivp(rhs, (0.0, T), p0, rtol=rtol, atol=atol, t_eval=times)
    if conj.status != 0:
        raise IntegrationError(conj.message, t_reached=float(conj.t[-1]))
    mapped = phi(conj.y.T)
    dist = float(np.max(np.abs(mapped - orig.y.T)))
    stats = {"nfev_original": int(orig.nfev), "nfev_conjugated": int(conj.nfev),
             "isotopy_nfev": integ.nfev}
    return ConjugacyReport(dist, times, orig.y.T, mapped, p0, newton_res, stats)
