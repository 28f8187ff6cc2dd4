"""Built-in scenarios.

Each scenario packages a foliated chart, a leaf-tangent Poisson bivector
``P``, a normal bundle, a deformation family, a torus action with moment
forms, a Hamiltonian and a sampling box.  Construction-time checks
(Jacobi, flatness, compatibility where claimed) run when a scenario is built.

Scenarios
---------
product
    Direct product, ``Gamma = 0``; every average is trivial.
s1-rotated-translator
    ``n_V = n_H = 2``, ``P = d_x1 ^ d_x2``, flat translation connection
    ``Gamma^alpha_i = b^alpha_i(xi)``, rotation in ``(x1, x2)``,
    ``mu = d(|x|^2 / 2)``, ``psi = f(xi) d_xi1 ^ d_xi2``.
s3-coupling
    As ``s1-rotated-translator`` with ``f`` bounded away from zero.
s4-degenerate
    ``n_V = 2``, ``n_H = 3``, ``P = (xi3 - g0) d_x1 ^ d_x2`` vanishing on a
    hyperplane.  The rotation is not generated by ``P`` there, so the
    compatibility condition fails by design; the scenario exercises the
    Dirac-level path and its failure modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import jets as J
from .averaging import CompatibilityData, TorusAction, q_form, verify_compatibility
from .calculus import jacobi_residual
from .deformation import DeformationFamily
from .dynamics import build_fibered_deformation
from .errors import ConstructionError, ScenarioError
from .fields import ConstantField, Field, FunctionField, as_points
from .foliation import Connection, FoliatedChart, curvature, horizontal_lift

__all__ = ["Scenario", "build_scenario", "list_scenarios", "SCENARIOS"]


def _sobol(d, n, seed):
    """First ``n`` points of a scrambled Sobol sequence (drawn in a power-of-two block)."""
    m = max(0, int(np.ceil(np.log2(max(n, 1)))))
    return qmc.Sobol(d=d, scramble=True, seed=seed).random_base2(m)[:n]


def _sin(a):
    return J.sin(a) if isinstance(a, J.Jet) else np.sin(a)


def _cos(a):
    return J.cos(a) if isinstance(a, J.Jet) else np.cos(a)


@dataclass
class Scenario:
    name: str
    description: str
    chart: FoliatedChart
    P: Field
    conn: Connection
    family: DeformationFamily
    action: TorusAction
    compat: CompatibilityData
    F: Field
    psi: Field
    parameters: dict
    box: tuple
    claims: dict
    seed: int = 0
    n_samples: int = 100
    residuals: dict = field(default_factory=dict)
    _q_cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.chart.n

    def sample(self, n: int | None = None, seed: int | None = None) -> np.ndarray:
        """Scrambled Sobol points in the box."""
        n = self.n_samples if n is None else int(n)
        seed = self.seed if seed is None else int(seed)
        lo, hi = (np.asarray(b, float) for b in self.box)
        return qmc.scale(_sobol(self.dim, n, seed), lo, hi)

    def Q(self, t_nodes: int = 64, tau_nodes: int = 32, scheme: str = "nested") -> Field:
        key = (t_nodes, tau_nodes, scheme)
        if key not in self._q_cache:
            self._q_cache[key] = q_form(self.action, self.compat, self.conn, t_nodes, tau_nodes, scheme)
        return self._q_cache[key]


# ----------------------------------------------------------------------
def _planar_P(n, coeff=None):
    if coeff is None:
        m = np.zeros((n, n))
        m[0, 1], m[1, 0] = 1.0, -1.0
        return ConstantField("bivector", n, m, name="P")

    def fn(x):
        g = coeff(x)
        out = [[0.0] * n for _ in range(n)]
        out[0][1] = g
        out[1][0] = -g
        return out

    return FunctionField("bivector", n, fn, name="P")


def _moment(n, omega):
    return FunctionField("oneform", n, lambda x: [omega * x[0], omega * x[1]] + [0.0] * (n - 2), name="mu")


def _hamiltonian(n, v1, v2, v3=0.0):
    def fn(x):
        out = 0.5 * (x[0] * x[0] + x[1] * x[1]) + v1 * _cos(x[2]) + v2 * _sin(x[3])
        if n > 4:
            out = out + v3 * x[4] * x[4]
        return out

    return FunctionField("scalar", n, fn, name="F")


def _translator(amp, a, c, d, nh=2):
    """Flat coefficients ``b_i = d/dxi^i phi`` (symmetric xi-jacobian)."""

    def fn(x):
        s1, s2 = x[2], x[3]
        row1 = [amp * (a * _cos(s1) + c * s2), amp * c * s1]
        row2 = [amp * c * s1, -amp * d * _sin(s2)]
        if nh == 3:
            row1.append(0.0)
            row2.append(amp * c)
        return [row1, row2]

    return fn


def _psi(n, f0, f1, nh=2):
    def fn(x):
        f = f0 + f1 * _sin(x[2]) * _cos(x[3])
        m = [[0.0] * nh for _ in range(nh)]
        m[0][1] = f
        m[1][0] = -f
        return m

    return FunctionField("tensor", n, fn, shape=(nh, nh), name="psi")


def _merge(defaults: dict, overrides: dict | None, name: str) -> dict:
    params = dict(defaults)
    for k, v in (overrides or {}).items():
        if k not in defaults:
            raise ScenarioError(f"unknown parameter {k!r} for scenario {name!r}; "
                                f"known: {sorted(defaults)}")
        try:
            params[k] = float(v)
        except (TypeError, ValueError):
            raise ScenarioError(f"parameter {k!r} must be numeric, got {v!r}") from None
    return params


def _check_rotation_speed(omega):
    if omega == 0 or omega != round(omega):
        raise ScenarioError(f"rotation speed must be a nonzero integer, got {omega!r}")


def _registration_checks(sc: Scenario, eps_grid=(0.0, 0.05, 0.1)):
    pts = sc.sample(32, seed=sc.seed + 1000)
    res = {"jacobi": max(jacobi_residual(sc.family.eval(e), pts) for e in eps_grid)}
    if res["jacobi"] > 1e-9:
        raise ConstructionError(f"{sc.name}: deformation fails the Jacobi identity", res["jacobi"])
    rep = verify_compatibility(sc.action, sc.P, sc.compat, pts)
    res["compatibility"] = rep.generator_residual
    res["closedness"] = rep.closedness_residual
    if sc.claims["compatible"] and not rep.passed:
        raise ConstructionError(f"{sc.name}: action not compatible", max(rep.generator_residual,
                                                                          rep.closedness_residual))
    res["curvature"] = float(np.max(np.abs(curvature(sc.conn, pts))))
    if sc.claims["flat"] and res["curvature"] > 1e-10:
        raise ConstructionError(f"{sc.name}: connection not flat", res["curvature"])
    res["group_law"] = sc.action.group_law_residual(pts[:8])
    res["generators"] = sc.action.generator_residual(pts[:8])
    sc.residuals = res
    return sc


def _fibered(name, description, params, f0, f1):
    chart = FoliatedChart(2, 2)
    _check_rotation_speed(params["omega"])
    n = chart.n
    P = _planar_P(n)
    conn = Connection.from_formula(chart, _translator(params["conn_amp"], params["b_a"], params["b_c"],
                                                      params["b_d"]), name="translator")
    psi = _psi(n, f0, f1)
    box = (np.full(n, -params["box"]), np.full(n, params["box"]))
    lo, hi = box
    pts = qmc.scale(_sobol(n, 32, 12345), lo, hi)
    fam = build_fibered_deformation(P, psi, conn, pts, name=name)
    action = TorusAction.rotations(n, [(0, 1)], [params["omega"]])
    compat = CompatibilityData([_moment(n, params["omega"])], True)
    F = _hamiltonian(n, params["v1"], params["v2"])
    return Scenario(name, description, chart, P, conn, fam, action, compat, F, psi, params, box,
                    {"compatible": True, "flat": True, "poisson_connection": True,
                     "coupling": abs(f0) > abs(f1)},
                    seed=int(params["seed"]))


_FIBERED_DEFAULTS = {
    "omega": 1.0, "conn_amp": 1.0, "b_a": 0.3, "b_c": 0.2, "b_d": 0.25,
    "v1": 0.5, "v2": 0.3, "box": 1.0, "seed": 0.0,
}


def _build_product(overrides=None) -> Scenario:
    params = _merge({"omega": 1.0, "f0": 1.0, "v1": 0.5, "v2": 0.3, "box": 1.0, "seed": 0.0},
                    overrides, "product")
    _check_rotation_speed(params["omega"])
    chart = FoliatedChart(2, 2)
    n = chart.n
    P = _planar_P(n)
    conn = Connection.zero(chart)
    psi = _psi(n, params["f0"], 0.0)
    box = (np.full(n, -params["box"]), np.full(n, params["box"]))
    pts = qmc.scale(_sobol(n, 16, 12345), *box)
    fam = build_fibered_deformation(P, psi, conn, pts, name="product")
    sc = Scenario("product", "direct product, trivial connection", chart, P, conn, fam,
                  TorusAction.rotations(n, [(0, 1)], [params["omega"]]),
                  CompatibilityData([_moment(n, params["omega"])], True),
                  _hamiltonian(n, params["v1"], params["v2"]), psi, params, box,
                  {"compatible": True, "flat": True, "poisson_connection": True, "coupling": True},
                  seed=int(params["seed"]))
    return _registration_checks(sc)


def _build_s1(overrides=None) -> Scenario:
    params = _merge(dict(_FIBERED_DEFAULTS, f0=0.0, f1=1.0), overrides, "s1-rotated-translator")
    sc = _fibered("s1-rotated-translator", "rotation-invariant P, flat translation connection",
                  params, params["f0"], params["f1"])
    return _registration_checks(sc)


def _build_s3(overrides=None) -> Scenario:
    params = _merge(dict(_FIBERED_DEFAULTS, f0=1.0, f1=0.5), overrides, "s3-coupling")
    if abs(params["f1"]) >= abs(params["f0"]):
        raise ScenarioError("s3-coupling needs |f1| < |f0| so that psi is nondegenerate")
    sc = _fibered("s3-coupling", "as s1 with nondegenerate psi (coupling)", params,
                  params["f0"], params["f1"])
    return _registration_checks(sc)


def _build_s4(overrides=None) -> Scenario:
    params = _merge({"omega": 1.0, "conn_amp": 1.0, "b_a": 0.3, "b_c": 0.2, "b_d": 0.25,
                     "g0": 0.0, "v1": 0.5, "v2": 0.3, "v3": 0.2, "box": 1.0, "seed": 0.0},
                    overrides, "s4-degenerate")
    _check_rotation_speed(params["omega"])
    chart = FoliatedChart(2, 3)
    n = chart.n
    g0 = params["g0"]
    P = _planar_P(n, lambda x: x[4] - g0)
    conn = Connection.from_formula(chart, _translator(params["conn_amp"], params["b_a"], params["b_c"],
                                                      params["b_d"], nh=3), name="translator3")
    psi = _psi(n, 1.0, 0.0, nh=3)
    hor = horizontal_lift(psi, conn)
    fam = DeformationFamily(P, lambda e: hor, conn, name="s4")
    box = (np.full(n, -params["box"]), np.full(n, params["box"]))
    sc = Scenario("s4-degenerate", "P vanishes on the hyperplane xi3 = g0; compatibility fails by design",
                  chart, P, conn, fam, TorusAction.rotations(n, [(0, 1)], [params["omega"]]),
                  CompatibilityData([_moment(n, params["omega"])], True),
                  _hamiltonian(n, params["v1"], params["v2"], params["v3"]), psi, params, box,
                  {"compatible": False, "flat": True, "poisson_connection": False, "coupling": False},
                  seed=int(params["seed"]))
    return _registration_checks(sc)


SCENARIOS: dict[str, Callable[..., Scenario]] = {
    "product": _build_product,
    "s1-rotated-translator": _build_s1,
    "s3-coupling": _build_s3,
    "s4-degenerate": _build_s4,
}

_ALIASES = {"s1": "s1-rotated-translator", "s3": "s3-coupling", "s4": "s4-degenerate"}


def list_scenarios() -> list:
    return list(SCENARIOS)


def build_scenario(name: str, overrides: dict | None = None) -> Scenario:
    """Build a registered scenario; ``overrides`` maps parameter names to numbers."""
    key = _ALIASES.get(name, name)
    if key not in SCENARIOS:
        raise ScenarioError(f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}")
    return SCENARIOS[key](overrides)
