"""Command-line entry point.

Subcommands ``verify``, ``average``, ``isotopy``, ``simulate`` and
``list-scenarios``.  Exit codes: 0 success, 1 a check failed, 2 usage error,
3 numerical failure (gauge degeneracy, ODE blow-up, Newton failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields, replace

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from . import __version__
from .averaging import averaged_poisson_field, group_samples, invariance_residual, moment_theta
from .calculus import jacobi_residual
from .deformation import integrate_isotopy
from .dynamics import default_monitors, simulate, slow_fast_field, write_trajectory_csv
from .errors import AcpoissonError, NumericalFailure, ScenarioError
from .scenarios import SCENARIOS, build_scenario
from .verify import Settings, atomic_write, run_verify

__all__ = ["main", "main_entry", "load_config", "UsageError"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

_SETTING_KEYS = {f.name for f in fields(Settings)} - {"q0", "conjugacy"}
_INT_KEYS = {"quad_nodes", "tau_nodes", "n_samples", "n_isotopy", "seed"}


class UsageError(Exception):
    """Malformed command line or configuration."""


def _number(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise UsageError(f"config key {key!r} must be numeric, got {value!r}")
    return value


def load_config(path) -> tuple[dict, dict]:
    """Read a TOML config into ``(settings, parameter_overrides)``.

    Top-level keys are numerical settings (``eps``, ``seed``, ``quad_nodes``,
    ``tau_nodes``, ``ode_tol``, ``n_samples``, ``n_isotopy``, ``horizon``,
    ``conj_horizon``, ``scheme``); the ``[parameters]`` table holds numeric
    scenario overrides.
    """
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"malformed config {path}: {exc}") from exc
    settings, params = {}, {}
    for key, value in data.items():
        if key == "parameters":
            if not isinstance(value, dict):
                raise UsageError("[parameters] must be a table")
            params = {k: _number(k, v) for k, v in value.items()}
        elif key == "scheme":
            if value not in ("nested", "ray"):
                raise UsageError("scheme must be 'nested' or 'ray'")
            settings[key] = value
        elif key in _SETTING_KEYS:
            v = _number(key, value)
            if key in _INT_KEYS:
                if int(v) != v:
                    raise UsageError(f"config key {key!r} must be an integer")
                v = int(v)
            settings[key] = v
        else:
            raise UsageError(f"unknown config key {key!r}")
    return settings, params


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="s1", help="scenario name or alias (default s1)")
    common.add_argument("--config", help="TOML file with settings and a [parameters] table")
    common.add_argument("--eps", type=float, help="deformation parameter")
    common.add_argument("--seed", type=int, help="seed for the sample points")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    common.add_argument("--quad-nodes", type=_positive_int, help="nodes of the torus quadrature")
    common.add_argument("--ode-tol", type=float, help="absolute and relative ODE tolerance")

    ap = argparse.ArgumentParser(prog="acpoisson", description="Averaging and coupling checks for foliated "
                                 "Poisson structures with torus symmetry.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", parents=[common], help="run every applicable check and write report.json")
    v.add_argument("--suite", action="append", help="restrict to a suite (repeatable)")
    a = sub.add_parser("average", parents=[common], help="tabulate Theta, Q and both bivectors on a grid")
    a.add_argument("--grid", type=_positive_int, default=5, help="points per axis of the grid (default 5)")
    i = sub.add_parser("isotopy", parents=[common], help="integrate the Moser isotopy at sample points")
    i.add_argument("--points", type=_positive_int, help="number of sample points")
    i.add_argument("--convergence", action="store_true", help="also integrate at half the tolerance")
    s = sub.add_parser("simulate", parents=[common], help="integrate a slow-fast trajectory to CSV")
    s.add_argument("--q0", type=_floats, help="initial point, comma separated")
    s.add_argument("--horizon", type=float, help="final time T")
    sub.add_parser("list-scenarios", help="list registered scenarios")
    return ap


def _setup(args):
    settings, params = load_config(args.config) if args.config else ({}, {})
    for key, attr in (("eps", "eps"), ("seed", "seed"), ("quad_nodes", "quad_nodes"), ("ode_tol", "ode_tol")):
        val = getattr(args, attr, None)
        if val is not None:
            settings[key] = val
    if settings.get("ode_tol", 1.0) <= 0:
        raise UsageError("ODE tolerance must be positive")
    st = replace(Settings(), **settings)
    sc = build_scenario(args.scenario, params or None)
    return sc, st


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    atomic_write(path, lambda fh: fh.write(text))


def _write_csv(path, rows):
    atomic_write(path, lambda fh: csv.writer(fh, lineterminator="\n").writerows(rows))


def _pairs(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def _grid(sc, per_axis):
    lo, hi = (np.asarray(b, float) for b in sc.box)
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


# ----------------------------------------------------------------------
def cmd_verify(args, out) -> int:
    sc, st = _setup(args)
    rep = run_verify(sc, st, args.suite)
    rep.write(os.path.join(out, "report.json"))
    for c in rep.checks:
        status = "PASS" if c["pass"] else "FAIL"
        shown = "error" if c["residual"] is None else f"{c['residual']:.3e}"
        print(f"{status} {c['check_id']}: {shown} (tol {c['tolerance']:.1e}) [{c['anchor']}]")
    print(f"{sum(c['pass'] for c in rep.checks)}/{len(rep.checks)} checks passed; eps_max = {rep.eps_max}")
    if rep.numerical_failure:
        return EXIT_NUMERICAL
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_average(args, out) -> int:
    sc, st = _setup(args)
    n = sc.dim
    pts = _grid(sc, args.grid)
    Q = st.q_form(sc)
    theta = moment_theta(sc.action, sc.compat, sc.conn, st.quad_nodes, st.tau_nodes, st.scheme, part=0)
    pe = sc.family.eval(st.eps)
    avg = averaged_poisson_field(pe, Q)
    th_v, q_v, pe_v, avg_v = theta(pts), Q(pts), pe(pts), avg(pts)
    pairs = _pairs(n)
    header = [f"q{i + 1}" for i in range(n)] + [f"theta{i + 1}" for i in range(n)] + [f"Q{i + 1}" for i in range(n)]
    header += [f"pi_eps_{i + 1}{j + 1}" for i, j in pairs] + [f"pi_avg_{i + 1}{j + 1}" for i, j in pairs]
    rows = [header]
    for k in range(len(pts)):
        vals = list(pts[k]) + list(th_v[k]) + list(q_v[k])
        vals += [pe_v[k, i, j] for i, j in pairs] + [avg_v[k, i, j] for i, j in pairs]
        rows.append([repr(float(v)) for v in vals])
    _write_csv(os.path.join(out, "average.csv"), rows)
    angles = group_samples(sc.action.k, 8, st.seed + 7)
    summary = {
        "scenario": sc.name,
        "eps": st.eps,
        "grid_points": int(len(pts)),
        "quad_nodes": st.quad_nodes,
        "tau_nodes": st.tau_nodes,
        "jacobi_residual": jacobi_residual(avg, pts),
        "invariance_residual": invariance_residual(sc.action, avg, pts, angles),
        "max_abs_Q": float(np.max(np.abs(q_v))),
        "max_avg_minus_pi_eps": float(np.max(np.abs(avg_v - pe_v))),
        "version": __version__,
    }
    _write_json(os.path.join(out, "average.json"), summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_isotopy(args, out) -> int:
    sc, st = _setup(args)
    n = sc.dim
    count = args.points or st.n_isotopy
    pts = sc.sample(count, st.seed + 1)
    Q = st.q_form(sc)
    res = integrate_isotopy(sc.family, Q, st.eps, pts, rtol=st.ode_tol, atol=st.ode_tol)
    header = [f"q{i + 1}" for i in range(n)] + [f"phi{i + 1}" for i in range(n)]
    header += [f"jac_{i + 1}{j + 1}" for i in range(n) for j in range(n)] + ["residual"]
    rows = [header]
    for k in range(len(pts)):
        vals = list(res.points[k]) + list(res.images[k]) + list(res.jacobians[k].ravel()) + [res.residuals[k]]
        rows.append([repr(float(v)) for v in vals])
    _write_csv(os.path.join(out, "isotopy.csv"), rows)
    summary = {"scenario": sc.name, "eps": st.eps, "points": int(count), "residual": res.residual,
               "ode_stats": res.ode_stats, "seed": st.seed, "version": __version__}
    if args.convergence and st.eps != 0.0:
        half = integrate_isotopy(sc.family, Q, st.eps, pts, rtol=st.ode_tol / 2, atol=st.ode_tol / 2)
        summary["residual_half_tolerance"] = half.residual
        summary["ratio"] = half.residual / res.residual if res.residual > 0 else None
    _write_json(os.path.join(out, "isotopy.json"), summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK if res.residual < 1e-6 else EXIT_FAIL


def cmd_simulate(args, out) -> int:
    sc, st = _setup(args)
    from .verify import _default_q0

    q0 = np.asarray(args.q0, float) if args.q0 is not None else _default_q0(sc)
    if q0.shape != (sc.dim,):
        raise UsageError(f"--q0 needs {sc.dim} components, got {q0.size}")
    T = st.horizon if args.horizon is None else args.horizon
    if T <= 0:
        raise UsageError("--horizon must be positive")
    mons = default_monitors(sc.F, sc.chart)
    tol = {} if args.ode_tol is None else {"rtol": args.ode_tol, "atol": args.ode_tol}
    rec = simulate(slow_fast_field(sc.F, sc.family.eval(st.eps)), q0, T, monitors=mons, **tol)
    write_trajectory_csv(rec, os.path.join(out, "trajectory.csv"), sc.chart)
    summary = {"scenario": sc.name, "eps": st.eps, "horizon": T, "q0": [float(v) for v in q0],
               "steps": int(len(rec.times) - 1), "nfev": rec.nfev,
               "drift": {k: rec.drift(k) for k in rec.monitors}, "version": __version__}
    _write_json(os.path.join(out, "trajectory.json"), summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_list(args, out) -> int:
    for name in SCENARIOS:
        sc = build_scenario(name)
        print(f"{name}: {sc.description}")
    return EXIT_OK


_COMMANDS = {"verify": cmd_verify, "average": cmd_average, "isotopy": cmd_isotopy,
             "simulate": cmd_simulate, "list-scenarios": cmd_list}


def main(argv=None) -> int:
    """Run the command line; returns the process exit code."""
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    out = getattr(args, "out", "out")
    try:
        if getattr(args, "suite", None):
            from .verify import _SUITES

            unknown = [s for s in args.suite if s not in _SUITES]
            if unknown:
                raise UsageError(f"unknown suite(s) {unknown}; available: {', '.join(_SUITES)}")
        return _COMMANDS[args.command](args, out)
    except (UsageError, ScenarioError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        print(f"acpoisson: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"acpoisson: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AcpoissonError as exc:
        print(f"acpoisson: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main_entry() -> None:
    """Console-script wrapper around :func:`main`."""
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
