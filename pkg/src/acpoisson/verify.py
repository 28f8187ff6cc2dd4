"""Verification suites and machine-readable reports.

Every suite returns a list of :class:`Check` entries.  A check passes when
its residual is below the tolerance (or, for ``mode="at_least"``, when the
residual reaches the threshold, used for deliberate violations).  Errors
raised inside a check are recorded on the entry instead of aborting the run.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .averaging import (
    average_connection,
    averaged_dirac,
    averaged_poisson_field,
    dirac_invariance_residual,
    group_samples,
    invariance_residual,
    theta_form,
)
from .calculus import exterior_derivative, jacobi_residual, sharp
from .deformation import (
    find_eps_max,
    first_order_cocycles,
    gauge_family_field,
    gauge_is_degenerate,
    homotopy_residual,
    integrate_isotopy,
    moser_field,
    moser_scaling,
    remainder_fit,
)
from .dirac import (
    DiracField,
    DiracSubspace,
    extract_poisson,
    gauge_poisson,
    gauge_subspace,
    graph_of_poisson,
    is_graph,
    max_principal_angle,
)
from .dynamics import compare_conjugated_dynamics, default_monitors, simulate, slow_fast_field
from .errors import AcpoissonError, GaugeDegeneracyError, NotAGraphError, NumericalFailure
from .fields import DerivedField, Field, as_points
from .foliation import (
    almost_coupling_report,
    bigrade_bivector,
    bigraded_component,
    coupling_form_field,
    curvature_identity_residual,
    d_bigraded,
    is_coupling,
    sigma_as_twoform,
)

__all__ = [
    "Check",
    "Settings",
    "VerificationReport",
    "run_verify",
    "atomic_write",
    "suite_chart",
    "suite_gauge_graph",
    "suite_gauge_group",
    "suite_averaging",
    "suite_isotopy",
    "suite_first_order",
    "suite_coupling",
    "suite_dynamics",
    "suite_degenerate",
    "sigma_expansion",
    "degeneracy_locus_points",
]


@dataclass
class Check:
    check_id: str
    anchor: str
    residual: float | None
    tolerance: float
    mode: str = "below"
    error: str | None = None
    error_kind: str | None = None

    @property
    def passed(self) -> bool:
        if self.error is not None or self.residual is None or not np.isfinite(self.residual):
            return False
        if self.mode == "at_least":
            return self.residual >= self.tolerance
        return self.residual < self.tolerance

    def to_dict(self) -> dict:
        out = {"check_id": self.check_id, "anchor": self.anchor,
               "residual": None if self.residual is None else float(self.residual),
               "tolerance": float(self.tolerance), "pass": self.passed}
        if self.mode != "below":
            out["mode"] = self.mode
        if self.error is not None:
            out["error"] = self.error
            out["error_kind"] = self.error_kind
        return out

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        res = "error" if self.residual is None else f"{self.residual:.3e}"
        op = ">=" if self.mode == "at_least" else "<"
        extra = f" [{self.error}]" if self.error else ""
        return f"{status} {self.check_id}: {res} {op} {self.tolerance:.1e}{extra}"


def _run(check_id, anchor, tol, fn, mode="below") -> Check:
    """Evaluate ``fn()`` into a check, capturing library errors."""
    try:
        r = float(fn())
        return Check(check_id, anchor, r, tol, mode)
    except AcpoissonError as exc:
        kind = "numerical" if isinstance(exc, NumericalFailure) else "library"
        return Check(check_id, anchor, None, tol, mode, error=f"{type(exc).__name__}: {exc}", error_kind=kind)


@dataclass
class Settings:
    """Numerical controls shared by the suites."""

    eps: float = 0.05
    quad_nodes: int = 64
    tau_nodes: int = 32
    scheme: str = "nested"
    ode_tol: float = 1e-10
    n_samples: int = 100
    n_isotopy: int = 20
    seed: int = 0
    horizon: float = 20.0
    conj_horizon: float = 10.0
    q0: tuple | None = None
    conjugacy: bool | None = None  # None: scenario default (s1, s3, product)

    def q_form(self, sc):
        return sc.Q(self.quad_nodes, self.tau_nodes, self.scheme)


def _sup(a) -> float:
    a = np.asarray(a, float)
    return float(np.max(np.abs(a))) if a.size else 0.0


# ----------------------------------------------------------------------
# pointwise suites
def suite_gauge_graph(cases: int = 500, seed: int = 0, dims=(2, 3, 4, 5, 6)) -> list:
    """Gauge of a graph versus the bivector formula, plus deliberately singular cases."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    singular_ok = 0
    singular_total = 0
    for c in range(cases):
        n = int(dims[c % len(dims)])
        a = rng.normal(size=(n, n))
        pi = a - a.T
        b = rng.normal(size=(n, n))
        b = b - b.T
        nrm = np.linalg.norm(b @ pi, 2)
        if nrm > 0:
            b *= rng.uniform(0.05, 0.49) / nrm
        d = gauge_subspace(graph_of_poisson(pi), b)
        worst = max(worst, _sup(extract_poisson(d) - gauge_poisson(pi, b)))
        # B w = v with w = Pi v puts v in the kernel of I - B Pi
        singular_total += 1
        v = rng.normal(size=n)
        w = pi @ v
        bs = (np.outer(v, w) - np.outer(w, v)) / (w @ w)
        if not is_graph(gauge_subspace(graph_of_poisson(pi), bs)):
            singular_ok += 1
    return [
        Check("gauge_graph_equivalence", "gauge of a graph is the graph of Pi (I - B Pi)^-1", worst, 1e-10),
        Check("singular_gauge_not_graph", "singular I - B Pi gives a non-graph subspace",
              float(singular_total - singular_ok), 0.5),
    ]


def suite_gauge_group(cases: int = 200, seed: int = 1, dims=(2, 3, 4, 5, 6)) -> list:
    """Group law and involution of gauge transformations on random Dirac subspaces."""
    rng = np.random.default_rng(seed)
    law = 0.0
    inv = 0.0
    for c in range(cases):
        n = int(dims[c % len(dims)])
        d = _random_dirac(n, rng)
        b1, b2 = (_antisym(rng.normal(size=(n, n))) for _ in range(2))
        lhs = gauge_subspace(gauge_subspace(d, b1), b2)
        law = max(law, max_principal_angle(lhs.basis, gauge_subspace(d, b1 + b2).basis))
        back = gauge_subspace(gauge_subspace(d, b1), -b1)
        inv = max(inv, max_principal_angle(back.basis, d.basis))
    return [
        Check("gauge_group_law", "tau_B2 tau_B1 = tau_(B1+B2)", law, 1e-10),
        Check("gauge_involution", "tau_-B tau_B = identity", inv, 1e-10),
    ]


def _antisym(m):
    return m - m.T


def _random_dirac(n, rng) -> DiracSubspace:
    """Random Dirac subspace: presymplectic graph on a random subspace.

    ``{(X, i_X omega + eta) : X in E, eta in Ann(E)}`` for random ``E`` and
    ``omega`` is maximally isotropic; graphs of bivectors are included.
    """
    k = int(rng.integers(0, n + 1))
    if k == 0:
        return DiracSubspace(np.vstack([np.zeros((n, n)), np.eye(n)]))
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    e, ann = q[:, :k], q[:, k:]
    om = _antisym(rng.normal(size=(n, n)))
    top = np.hstack([e, np.zeros((n, n - k))])
    bottom = np.hstack([om.T @ e, ann])
    return DiracSubspace(np.vstack([top, bottom]))


# ----------------------------------------------------------------------
# scenario suites
def suite_chart(sc, st: Settings) -> list:
    pts = sc.sample(st.n_samples, st.seed)
    pe = sc.family.eval(st.eps)
    checks = [
        _run("jacobi_P", "P is Poisson", 1e-10, lambda: jacobi_residual(sc.P, pts)),
        _run("jacobi_pi_eps", "deformed bivector is Poisson", 1e-9, lambda: jacobi_residual(pe, pts)),
        _run("almost_coupling_pi_eps", "mixed block of the deformation vanishes", 1e-10,
             lambda: almost_coupling_report(pe, sc.conn, pts).sup_mixed),
        _run("leaf_block_independent", "leaf block of the deformation equals P", 1e-10,
             lambda: _sup(bigrade_bivector(pe, sc.conn, pts).p02 - bigrade_bivector(sc.P, sc.conn, pts).p02)),
        _run("bigrading_roundtrip", "blocks reassemble to the bivector", 1e-12,
             lambda: _sup(bigrade_bivector(pe, sc.conn, pts).reassemble() - pe(pts))),
        _run("projector_idempotent", "vertical projector is idempotent", 1e-14,
             lambda: sc.conn.idempotence_residual(pts)),
        _run("group_law", "torus action group law", 1e-9, lambda: sc.action.group_law_residual(pts[:16])),
        _run("generator_match", "generators are flow derivatives", 1e-9,
             lambda: sc.action.generator_residual(pts[:16])),
        _run("moment_closed", "moment forms are closed", 1e-10,
             lambda: max(_sup(exterior_derivative(m)(pts)) for m in sc.compat.mu)),
    ]
    gen = _run("moment_generates_action", "sharp(P, mu) equals the generator", 1e-10,
               lambda: max(_sup(sharp(sc.P, m)(pts) - a(pts))
                           for m, a in zip(sc.compat.mu, sc.action.generators)))
    if not sc.claims["compatible"]:
        gen = Check("compatibility_violated", "action deliberately not generated by P", gen.residual,
                    1e-6, mode="at_least", error=gen.error, error_kind=gen.error_kind)
    checks.append(gen)
    if sc.claims["flat"]:
        from .foliation import curvature
        checks.append(_run("connection_flat", "connection has zero curvature", 1e-10,
                           lambda: _sup(curvature(sc.conn, pts))))
    if sc.claims["poisson_connection"]:
        from .foliation import poisson_connection_residual
        checks.append(_run("poisson_connection", "horizontal fields preserve P", 1e-10,
                           lambda: poisson_connection_residual(sc.P, sc.conn, pts)))
    return checks


def suite_averaging(sc, st: Settings) -> list:
    """Averaged Dirac and Poisson structures and their invariants."""
    pts = sc.sample(st.n_samples, st.seed)
    eps = st.eps
    Q = st.q_form(sc)
    dQ = exterior_derivative(Q)
    P = sc.P
    pe = sc.family.eval(eps)
    avg = averaged_poisson_field(pe, Q, dQ=dQ, eps=eps)
    angles = group_samples(sc.action.k, 8, st.seed + 7)
    n = sc.dim
    checks = []
    checks.append(_run("avg_jacobi", "averaged bivector is Poisson", 1e-8, lambda: jacobi_residual(avg, pts)))
    checks.append(_run("avg_invariance", "averaged bivector is invariant", 1e-7,
                       lambda: invariance_residual(sc.action, avg, pts, angles)))
    checks.append(_run("avg_at_zero", "average of the undeformed structure is P", 1e-10,
                       lambda: _sup(averaged_poisson_field(P, Q, dQ=dQ)(pts) - P(pts))))

    def r1():
        m = dQ(pts) @ P(pts)
        return _sup(np.linalg.inv(np.eye(n) + m) - (np.eye(n) - m))

    checks.append(_run("inverse_truncation", "(I + dQ P)^-1 = I - dQ P", 1e-10, r1))
    checks.append(_run("p_dq_p_vanishes", "P dQ P = 0", 1e-12,
                       lambda: _sup(P(pts) @ dQ(pts) @ P(pts))))
    aconn = average_connection(sc.action, sc.conn, st.quad_nodes)
    checks.append(_run("avg_connection_idempotent", "averaged projector is idempotent", 1e-10,
                       lambda: _sup(_idem(aconn, pts))))
    checks.append(_run("avg_almost_coupling", "averaged bivector is almost-coupling for the averaged normal bundle",
                       1e-8, lambda: almost_coupling_report(avg, aconn, pts).sup_mixed))

    def normal_bundles():
        h = sc.conn.horizontal_values(pts)
        hb = (np.eye(n) - P(pts) @ dQ(pts)) @ h
        ha = aconn.horizontal_values(pts)
        return max(max_principal_angle(a, b) for a, b in zip(hb, ha))

    checks.append(_run("normal_bundle_agreement", "kernel of the averaged projector equals (I - P dQ) H", 1e-8,
                       normal_bundles))
    rho = [bigraded_component(m, sc.conn, 0) for m in sc.compat.mu]
    theta = theta_form(sc.action, rho, st.quad_nodes, st.tau_nodes, st.scheme)
    checks.append(_run("dtheta_equals_dq", "dTheta = dQ for closed moment forms", 1e-8,
                       lambda: _sup(exterior_derivative(theta)(pts) - dQ(pts))))
    d_eps = DiracField.graph(pe)
    d_avg = averaged_dirac(d_eps, theta)
    sub = pts[: min(len(pts), 25)]
    checks.append(_run("avg_dirac_invariance", "averaged Dirac structure is invariant", 1e-7,
                       lambda: dirac_invariance_residual(sc.action, d_avg, sub, angles)))
    checks.append(_run("avg_dirac_is_graph_of_avg", "averaged Dirac structure is the graph of the averaged bivector",
                       1e-8, lambda: max(max_principal_angle(a, b) for a, b in
                                         zip(d_avg.bases(sub), DiracField.graph(avg).bases(sub)))))
    d0 = averaged_dirac(DiracField.graph(P), theta)
    checks.append(_run("avg_dirac_at_zero", "averaged undeformed Dirac structure is the graph of P", 1e-10,
                       lambda: max(max_principal_angle(a, b) for a, b in
                                   zip(d0.bases(sub), DiracField.graph(P).bases(sub)))))
    if sc.name == "product":
        checks.append(_run("q_vanishes", "Q = 0 for the trivial connection", 1e-14, lambda: _sup(Q(pts))))
    return checks


def _idem(conn, pts):
    g = conn.averaged_projector(pts)
    return g @ g - g


def suite_isotopy(sc, st: Settings, convergence: bool = True) -> list:
    """Gauge path, Moser field and the conjugating isotopy."""
    eps = st.eps
    Q = st.q_form(sc)
    dQ = exterior_derivative(Q)
    pts = sc.sample(st.n_isotopy, st.seed + 1)
    path_pts = sc.sample(50, st.seed + 2)
    checks = []
    for t in (0.0, 0.5, 1.0):
        checks.append(_run(f"homotopy_t{t:g}", "L_Z Pi_t = -d/dt Pi_t", 1e-6,
                           lambda t=t: homotopy_residual(sc.family, Q, eps, t, pts)))
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        checks.append(_run(f"gauge_path_jacobi_t{t:g}", "gauge path stays Poisson", 1e-8,
                           lambda t=t: jacobi_residual(gauge_family_field(sc.family, Q, eps, t, dQ), path_pts)))
    checks.append(_run("gauge_path_at_zero", "undeformed gauge path is constant", 1e-12,
                       lambda: max(_sup(gauge_family_field(sc.family, Q, 0.0, t, dQ)(path_pts) - sc.P(path_pts))
                                   for t in (0.25, 0.5, 1.0))))
    checks.append(_run("moser_zero_at_zero", "Moser field vanishes for the undeformed structure", 1e-14,
                       lambda: _sup(moser_field(sc.family, Q, 0.0, 0.5, dQ)(path_pts))))
    if _sup(Q(path_pts)) > 1e-12:
        checks.append(_run("moser_scaling", "|Z| = O(eps): fitted exponent", 0.1,
                           lambda: abs(moser_scaling(sc.family, Q, path_pts[:20])[1] - 1.0)))
    res = {}

    def iso(tol):
        r = integrate_isotopy(sc.family, Q, eps, pts, rtol=tol, atol=tol)
        res[tol] = r
        return r.residual

    checks.append(_run("isotopy_residual", "phi^* Pi_eps = averaged bivector", 1e-6, lambda: iso(st.ode_tol)))
    if convergence and st.ode_tol in res and res[st.ode_tol].residual > 1e-14:
        def ratio():
            base = res[st.ode_tol].residual
            return iso(st.ode_tol / 2) / base

        checks.append(_run("isotopy_convergence", "halving the ODE tolerance at least halves the residual",
                           0.5 + 1e-12, ratio))
    return checks


def suite_first_order(sc, st: Settings) -> list:
    Q = st.q_form(sc)
    pts = sc.sample(st.n_isotopy, st.seed + 3)
    checks = []
    holder = {}

    def pair():
        if "pair" not in holder:
            holder["pair"] = first_order_cocycles(sc.family, Q, pts)
        return holder["pair"]

    checks.append(_run("cocycle", "[[P, Lambda0]] = 0", 1e-7, lambda: pair().residuals["cocycle"]))
    checks.append(_run("cocycle_avg", "[[P, averaged Lambda0]] = 0", 1e-7, lambda: pair().residuals["cocycle_avg"]))
    checks.append(_run("coboundary", "averaged Lambda0 - Lambda0 = L_w P", 1e-6,
                       lambda: pair().residuals["coboundary"]))
    angles = group_samples(sc.action.k, 8, st.seed + 7)
    checks.append(_run("avg_lambda0_invariance", "averaged first-order term is invariant", 1e-7,
                       lambda: invariance_residual(sc.action, pair().Lam0_avg, pts[:10], angles)))

    def fit():
        c, k, r = remainder_fit(sc.family, Q, pair(), pts)
        holder["fit"] = (c, k, r)
        if np.max(r) < 1e-13:
            return 0.0
        return abs(k - 2.0)

    checks.append(_run("remainder_exponent", "avg - P - eps avg Lambda0 = O(eps^2): |exponent - 2|", 0.2, fit))
    return checks


def sigma_expansion(family, conn, h: float = 1e-3):
    """Fields ``c`` and ``sigma_1`` of ``eps * sigma_eps = c + eps sigma_1 + ...``.

    Centered differences with one Richardson step, as in :func:`_richardson`.
    """
    def s(e):
        return coupling_form_field(family.eval(e), conn) * e

    nh = conn.chart.n_h

    def even(hh):
        return (s(hh) + s(-hh)) * 0.5

    def odd(hh):
        return (s(hh) - s(-hh)) * (1.0 / (2 * hh))

    c = (even(h / 2) * 4.0 - even(h)) * (1.0 / 3.0)
    s1 = (odd(h / 2) * 4.0 - odd(h)) * (1.0 / 3.0)
    c = DerivedField("tensor", conn.chart.n, c.at, shape=(nh, nh), max_order=c.max_order, name="c")
    s1 = DerivedField("tensor", conn.chart.n, s1.at, shape=(nh, nh), max_order=s1.max_order, name="sigma1")
    return c, s1


def suite_coupling(sc, st: Settings, eps_values=(0.02, 0.05)) -> list:
    pts = sc.sample(st.n_samples, st.seed + 4)
    n_v = sc.chart.n_v
    checks = []
    for e in eps_values:
        pe = sc.family.eval(e)
        rep = is_coupling(pe, sc.chart, pts)
        checks.append(Check(f"is_coupling_eps{e:g}", "deformation is coupling", 0.0 if rep.coupling else 1.0, 0.5))
        if not rep.coupling:
            continue
        conn = rep.connection
        sigma = coupling_form_field(pe, conn)
        checks.append(_run(f"induced_connection_eps{e:g}", "induced normal bundle equals the given one", 1e-10,
                           lambda conn=conn: _sup(conn.gamma(pts) - sc.conn.gamma(pts))))
        checks.append(_run(f"d10_sigma_eps{e:g}", "coupling form is covariantly constant", 1e-8,
                           lambda sigma=sigma, conn=conn: _sup(
                               d_bigraded(sigma_as_twoform(sigma, sc.chart), conn, (1, 0))(pts))))
        checks.append(_run(f"curvature_identity_eps{e:g}", "curvature plus Hamiltonian of the coupling form vanishes",
                           1e-8, lambda sigma=sigma, conn=conn: curvature_identity_residual(sc.P, conn, sigma, pts)))
    c, s1 = sigma_expansion(sc.family, sc.conn)

    def casimir():
        jc = c.jet(pts, 1)
        dc = np.moveaxis(jc.g, 0, -1)  # [B, i, j, l]
        pv = sc.P(pts)
        ham = np.einsum("zijl,zlm->zijm", dc, pv)
        return _sup(ham[..., :n_v])

    checks.append(_run("sigma0_casimir", "leading coupling-form term is a Casimir of P", 1e-8, casimir))
    checks.append(_run("sigma1_vanishes", "eps-independent horizontal part gives no first-order term", 1e-6,
                       lambda: _sup(s1(pts))))
    # averaged structure couples through the averaged normal bundle
    e = st.eps
    Q = st.q_form(sc)
    avg = averaged_poisson_field(sc.family.eval(e), Q)
    aconn = average_connection(sc.action, sc.conn, st.quad_nodes)

    def avg_coupling():
        rep = is_coupling(avg, sc.chart, pts)
        if not rep.coupling:
            return np.inf
        h1 = rep.connection.horizontal_values(pts)
        h2 = aconn.horizontal_values(pts)
        return max(max_principal_angle(a, b) for a, b in zip(h1, h2))

    checks.append(_run("avg_coupling_via_avg_bundle", "averaged structure is coupling via the averaged normal bundle",
                       1e-8, avg_coupling))
    return checks


def _default_q0(sc):
    base = [0.6, -0.3, 0.2, 0.4, 0.3, -0.2]
    return np.array(base[: sc.dim])


_CONJUGACY_DEFAULT = ("s1-rotated-translator", "s3-coupling", "product")


def suite_dynamics(sc, st: Settings, conjugacy: bool | None = None) -> list:
    eps = st.eps
    if conjugacy is None:
        conjugacy = st.conjugacy if st.conjugacy is not None else sc.name in _CONJUGACY_DEFAULT
    q0 = _default_q0(sc) if st.q0 is None else np.asarray(st.q0, float)
    n_v = sc.chart.n_v
    mons = default_monitors(sc.F, sc.chart)
    checks = []
    holder = {}

    def energy():
        rec = simulate(slow_fast_field(sc.F, sc.family.eval(eps)), q0, st.horizon, monitors=mons)
        holder["rec"] = rec
        return rec.drift("F")

    checks.append(_run("energy_drift", "F is conserved along its Hamiltonian flow", 1e-8, energy))

    def leaf():
        rec = simulate(slow_fast_field(sc.F, sc.P), q0, st.horizon, monitors=mons)
        return _sup(rec.states[:, n_v:] - q0[n_v:])

    checks.append(_run("leaf_confinement", "undeformed dynamics stays on the leaf", 1e-12, leaf))

    def slow():
        grid = np.array([0.01, 0.02, 0.04, 0.08])
        drift = []
        for e in grid:
            rec = simulate(slow_fast_field(sc.F, sc.family.eval(e)), q0, st.conj_horizon)
            drift.append(_sup(rec.states[:, n_v:] - q0[n_v:]))
        k = np.polyfit(np.log(grid), np.log(drift), 1)[0]
        return abs(k - 1.0)

    checks.append(_run("slow_scaling", "slow drift is O(eps T): |exponent - 1|", 0.1, slow))
    if conjugacy:
        Q = st.q_form(sc)
        if sc.action.k == 1 and st.scheme == "nested":
            # the conjugated flow evaluates Q thousands of times; the ray rule
            # needs tau_nodes times fewer nodes, so use it after checking that
            # both rules give the same jets
            ray = sc.Q(st.quad_nodes, st.tau_nodes, "ray")
            sub = sc.sample(20, st.seed + 3)
            checks.append(_run("conjugacy_q_rules_agree", "ray and nested rules give the same Q jets",
                               1e-12, lambda: _jet_gap(Q, ray, sub)))
            Q = ray
        checks.append(_run("conjugacy_distance", "isotopy conjugates the dynamics", 1e-5,
                           lambda: compare_conjugated_dynamics(sc.family, Q, eps, sc.F, q0,
                                                               st.conj_horizon).distance))
    return checks


def _jet_gap(a: Field, b: Field, pts) -> float:
    ja, jb = a.jet(pts, 2), b.jet(pts, 2)
    return max(_sup(ja.v - jb.v), _sup(ja.g - jb.g), _sup(ja.h - jb.h))


def degeneracy_locus_points(family, Q, eps, points, count: int = 8, seed: int = 0, rel: float = 1e-13):
    """Points where ``I + dQ Pi_eps`` is singular, found by bisection along segments.

    Segments join a point with a nondegenerate gauge path at ``t = 1`` to one
    with a real eigenvalue of ``dQ Pi_eps`` below ``-1``; the boundary found
    by bisection is kept only when the matrix is numerically singular there.
    """
    dQ = exterior_derivative(Q)
    p = as_points(points, family.dim)
    n = family.dim

    def below(q):
        a = dQ(q[None, :])[0] @ family.eval(eps)(q[None, :])[0]
        lam = np.linalg.eigvals(a)
        real = np.abs(lam.imag) <= 1e-7 * np.maximum(1.0, np.abs(lam))
        return bool(np.any(real & (lam.real < -1.0)))

    flags = np.array([below(q) for q in p])
    good, bad = p[~flags], p[flags]
    rng = np.random.default_rng(seed)
    out = []
    tries = 0
    while len(out) < count and tries < 20 * count and len(good) and len(bad):
        tries += 1
        a = good[rng.integers(len(good))]
        b = bad[rng.integers(len(bad))]
        lo, hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if below(a + mid * (b - a)):
                hi = mid
            else:
                lo = mid
        q = a + hi * (b - a)
        m = np.eye(n) + dQ(q[None, :])[0] @ family.eval(eps)(q[None, :])[0]
        s = np.linalg.svd(m, compute_uv=False)
        if s[-1] <= rel * s[0] * 1e3:
            out.append(q)
    return np.array(out).reshape(-1, n)


def suite_degenerate(sc, st: Settings, eps: float | None = None) -> list:
    """Dirac-level handling where ``P`` vanishes and where graphs break down."""
    Q = st.q_form(sc)
    pts = sc.sample(64, st.seed + 5)
    # points on the zero set of P (last transverse coordinate at g0)
    zero = pts.copy()
    zero[:, -1] = sc.parameters.get("g0", 0.0)
    checks = []
    pv = sc.P(zero)
    checks.append(Check("P_vanishes_on_sample", "P vanishes on the chosen hyperplane", _sup(pv), 1e-14))
    if eps is None:
        eps_max, bounded = find_eps_max(sc.family, Q, pts, eps_hi=50.0)
        eps = 1.5 * eps_max if bounded else st.eps
    rho = [bigraded_component(m, sc.conn, 0) for m in sc.compat.mu]
    theta = theta_form(sc.action, rho, st.quad_nodes, st.tau_nodes, st.scheme)
    pe = sc.family.eval(eps)
    d_avg = averaged_dirac(DiracField.graph(pe), theta)
    locus = degeneracy_locus_points(sc.family, Q, eps, pts, count=8, seed=st.seed)
    allpts = np.vstack([zero, pts, locus])

    def isotropy():
        worst = 0.0
        for b in d_avg.bases(allpts):
            d = DiracSubspace(b)
            if d.rank() != d.n:
                return np.inf
            worst = max(worst, d.isotropy_defect())
        return worst

    checks.append(_run("avg_dirac_isotropic", "averaged subspaces are maximally isotropic", 1e-12, isotropy))
    checks.append(Check("graph_breakdown_points", "points where the averaged structure is not a graph",
                        float(len(locus)), 1.0, mode="at_least"))
    dQ = exterior_derivative(Q)

    def consistency():
        mismatches = 0
        for q, b in zip(allpts, d_avg.bases(allpts)):
            d = DiracSubspace(b)
            graph = is_graph(d)
            try:
                extract_poisson(d)
                raised = False
            except NotAGraphError:
                raised = True
            try:
                averaged_poisson_field(pe, Q, dQ=dQ)(q[None, :])
                gauge_fail = False
            except GaugeDegeneracyError:
                gauge_fail = True
            if raised == graph or gauge_fail == graph:
                mismatches += 1
        return float(mismatches)

    checks.append(_run("extraction_fails_exactly_off_graph",
                       "extraction raises exactly where the subspace is not a graph", 0.5, consistency))

    def agree():
        worst = 0.0
        for q, b in zip(allpts, d_avg.bases(allpts)):
            d = DiracSubspace(b)
            if is_graph(d):
                pb = averaged_poisson_field(pe, Q, dQ=dQ)(q[None, :])[0]
                worst = max(worst, max_principal_angle(d.basis, graph_of_poisson(pb).basis))
        return worst

    checks.append(_run("graph_points_match_avg_bivector", "graph points carry the averaged bivector", 1e-8, agree))
    return checks


# ----------------------------------------------------------------------
# reports
@dataclass
class VerificationReport:
    scenario: str
    parameters: dict
    checks: list
    eps_max: float | None
    runtime: dict
    version: str
    seed: int
    settings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    @property
    def numerical_failure(self) -> bool:
        return any(c.get("error_kind") == "numerical" for c in self.checks)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write(self, path):
        text = self.to_json()
        atomic_write(path, lambda fh: fh.write(text))


def atomic_write(path, writer):
    """Write through a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(v):
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def run_verify(sc, st: Settings | None = None, suites=None) -> VerificationReport:
    """Run every applicable suite on a scenario."""
    st = Settings() if st is None else st
    t0 = time.perf_counter()
    timings = {}
    checks = []
    plan = suites or _applicable(sc)
    for name in plan:
        t1 = time.perf_counter()
        checks.extend(_SUITES[name](sc, st))
        timings[name] = round(time.perf_counter() - t1, 3)
    Q = st.q_form(sc)
    eps_max = None
    try:
        e, bounded = find_eps_max(sc.family, Q, sc.sample(st.n_samples, st.seed), eps_hi=50.0)
        eps_max = e if bounded else None
    except AcpoissonError:
        eps_max = None
    if eps_max is not None and st.eps >= eps_max:
        checks.append(Check("eps_within_validated_range", "gauge path nondegenerate at the requested eps",
                            None, eps_max, error=f"GaugeDegeneracyError: eps={st.eps} beyond eps_max={eps_max:.6g}",
                            error_kind="numerical"))
    entries = [c.to_dict() for c in checks]
    for e_ in entries:
        e_["residual"] = _clean(e_["residual"])
    timings["total"] = round(time.perf_counter() - t0, 3)
    return VerificationReport(
        scenario=sc.name,
        parameters={k: float(v) for k, v in sorted(sc.parameters.items())},
        checks=entries,
        eps_max=eps_max,
        runtime=timings,
        version=__version__,
        seed=int(st.seed),
        settings={"eps": st.eps, "quad_nodes": st.quad_nodes, "tau_nodes": st.tau_nodes,
                  "scheme": st.scheme, "ode_tol": st.ode_tol, "n_samples": st.n_samples},
    )


_SUITES = {
    "chart": suite_chart,
    "averaging": suite_averaging,
    "isotopy": suite_isotopy,
    "first_order": suite_first_order,
    "coupling": suite_coupling,
    "dynamics": suite_dynamics,
    "degenerate": suite_degenerate,
}


def _applicable(sc) -> list:
    if sc.name == "s4-degenerate":
        return ["chart", "degenerate"]
    plan = ["chart", "averaging", "isotopy", "first_order"]
    if sc.claims.get("coupling"):
        plan.append("coupling")
    plan.append("dynamics")
    return plan
