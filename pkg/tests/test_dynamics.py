import csv

import numpy as np
import pytest

from acpoisson.calculus import SmoothMap
from acpoisson.dynamics import (
    build_fibered_deformation,
    compare_conjugated_dynamics,
    default_monitors,
    invert_map,
    simulate,
    slow_fast_field,
    write_trajectory_csv,
)
from acpoisson.errors import ConstructionError, IntegrationError, NewtonError
from acpoisson.fields import ConstantField, FunctionField
from acpoisson.foliation import Connection, FoliatedChart

CHART = FoliatedChart(2, 2)
P = ConstantField("bivector", 4, [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
PSI = ConstantField("tensor", 4, [[0, 1], [-1, 0]])


def test_construction_refuses_bad_inputs(rng):
    pts = rng.uniform(-1, 1, (8, 4))
    curved = Connection.from_formula(CHART, lambda x: [[0.0, 0.7 * x[2]], [0.0, 0.0]])
    with pytest.raises(ConstructionError) as info:
        build_fibered_deformation(P, PSI, curved, pts)
    assert info.value.residual > 0.1
    # connection depending on x does not preserve P
    twisted = Connection.from_formula(CHART, lambda x: [[x[0], 0.0], [0.0, 0.0]])
    with pytest.raises(ConstructionError):
        build_fibered_deformation(P, PSI, twisted, pts)
    fam = build_fibered_deformation(P, PSI, Connection.zero(CHART), pts)
    assert fam.coupling and fam.residuals["jacobi"] < 1e-12


def test_hamiltonian_field_components(rng):
    F = FunctionField("scalar", 4, lambda x: x[0] ** 2 + 3 * x[1] + x[2] * x[3])
    p = rng.uniform(-1, 1, (5, 4))
    X = slow_fast_field(F, P)(p)
    np.testing.assert_allclose(X[:, 0], -3.0 * np.ones(5))  # -dF_2
    np.testing.assert_allclose(X[:, 1], 2 * p[:, 0])  # dF_1
    np.testing.assert_allclose(X[:, 2:], 0.0)


def test_energy_and_leaf_confinement(s1):
    q0 = np.array([0.6, -0.3, 0.2, 0.4])
    mons = default_monitors(s1.F, s1.chart)
    rec = simulate(slow_fast_field(s1.F, s1.family.eval(0.05)), q0, 20.0, monitors=mons)
    assert rec.drift("F") < 1e-8
    assert rec.drift("F") <= 10 * 1e-11 * len(rec.times) + 1e-14
    rec0 = simulate(slow_fast_field(s1.F, s1.P), q0, 20.0, monitors=mons)
    assert rec0.drift("xi1") < 1e-12 and rec0.drift("xi2") < 1e-12


def test_slow_drift_scales_with_eps(s1):
    q0 = np.array([0.6, -0.3, 0.2, 0.4])
    grid = np.array([0.01, 0.02, 0.04, 0.08])
    drift = [np.max(np.abs(simulate(slow_fast_field(s1.F, s1.family.eval(e)), q0, 10.0).states[:, 2:] - q0[2:]))
             for e in grid]
    k = np.polyfit(np.log(grid), np.log(drift), 1)[0]
    assert abs(k - 1.0) < 0.1


def test_simulate_errors():
    X = FunctionField("vector", 2, lambda x: [x[0] * x[0], 0.0])
    with pytest.raises(IntegrationError) as info:
        simulate(X, [1.0, 0.0], 5.0, bound=100.0)
    assert 0.0 < info.value.t_reached < 1.0
    with pytest.raises(ValueError):
        simulate(X, [1.0, 0.0], -1.0)


def test_trajectory_csv(tmp_path, s1):
    q0 = np.array([0.6, -0.3, 0.2, 0.4])
    rec = simulate(slow_fast_field(s1.F, s1.family.eval(0.05)), q0, 1.0, monitors=default_monitors(s1.F, s1.chart))
    path = tmp_path / "traj.csv"
    header = write_trajectory_csv(rec, path, s1.chart)
    assert header == ["t", "x1", "x2", "xi1", "xi2", "mon_F", "mon_xi1", "mon_xi2", "dt"]
    rows = list(csv.reader(open(path)))
    assert rows[0] == header and len(rows) == len(rec.times) + 1
    np.testing.assert_allclose([float(v) for v in rows[-1][1:5]], rec.states[-1])


def test_invert_map_newton():
    phi = SmoothMap.from_formula(2, lambda x: [x[0] + 0.2 * x[1] ** 2, x[1] + 0.1 * x[0] ** 3])
    target = np.array([0.4, -0.7])
    p = invert_map(phi, target)
    np.testing.assert_allclose(phi(p), target, atol=1e-12)
    flat = SmoothMap.from_formula(2, lambda x: [x[0] ** 2 + 1.0, x[1]])
    with pytest.raises(NewtonError):
        invert_map(flat, np.array([0.0, 0.0]), max_iter=5)


def test_conjugacy_trivial_at_zero(s1):
    rep = compare_conjugated_dynamics(s1.family, s1.Q(), 0.0, s1.F, [0.6, -0.3, 0.2, 0.4], 2.0)
    assert rep.distance == 0.0
