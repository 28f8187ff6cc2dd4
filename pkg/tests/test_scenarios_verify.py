import json

import numpy as np
import pytest

from acpoisson.errors import ScenarioError
from acpoisson.scenarios import build_scenario, list_scenarios
from acpoisson.verify import Check, Settings, atomic_write, run_verify, suite_gauge_graph, suite_gauge_group


def test_registry():
    names = list_scenarios()
    assert {"product", "s1-rotated-translator", "s3-coupling", "s4-degenerate"} <= set(names)
    with pytest.raises(ScenarioError):
        build_scenario("missing")


@pytest.mark.parametrize("bad", [{"nope": 1.0}, {"omega": "fast"}, {"omega": 0.5}, {"omega": 0.0}])
def test_override_validation(bad):
    with pytest.raises(ScenarioError):
        build_scenario("s1", bad)


def test_s3_rejects_degenerate_psi():
    with pytest.raises(ScenarioError):
        build_scenario("s3", {"f0": 0.5, "f1": 1.0})


def test_override_changes_parameters():
    sc = build_scenario("s1", {"conn_amp": 0.5, "omega": 2})
    assert sc.parameters["conn_amp"] == 0.5 and sc.parameters["omega"] == 2.0
    assert sc.residuals["generators"] < 1e-8


def test_registration_residuals(s1, s3, s4, product):
    for sc in (s1, s3, product):
        assert sc.residuals["jacobi"] < 1e-9
        assert sc.claims["compatible"] and sc.claims["flat"]
    assert not s4.claims["compatible"]
    assert s3.claims["coupling"] and not s1.claims["coupling"]


def test_sampling_is_seeded(s1):
    a, b = s1.sample(10, 3), s1.sample(10, 3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, s1.sample(10, 4))
    lo, hi = s1.box
    assert np.all(a >= lo) and np.all(a <= hi)


def test_check_semantics():
    assert Check("a", "x", 1e-12, 1e-10).passed
    assert not Check("a", "x", 1e-9, 1e-10).passed
    assert not Check("a", "x", float("nan"), 1e-10).passed
    assert Check("a", "x", 3.0, 1.0, mode="at_least").passed
    d = Check("a", "anchor text", None, 1.0, error="boom", error_kind="numerical").to_dict()
    assert d["pass"] is False and d["anchor"] == "anchor text" and d["error_kind"] == "numerical"


def test_pointwise_gauge_suites():
    assert all(c.passed for c in suite_gauge_graph(100))
    assert all(c.passed for c in suite_gauge_group(50))


def test_report_is_deterministic(s1):
    st = Settings(n_samples=20)
    r1 = json.loads(run_verify(s1, st, ["chart"]).to_json())
    r2 = json.loads(run_verify(s1, st, ["chart"]).to_json())
    r1.pop("runtime")
    r2.pop("runtime")
    assert r1 == r2
    assert set(r1) == {"scenario", "parameters", "checks", "eps_max", "version", "seed", "settings"}
    assert all({"check_id", "anchor", "residual", "tolerance", "pass"} <= set(c) for c in r1["checks"])


def test_eps_beyond_eps_max_is_numerical_failure(s1):
    rep = run_verify(s1, Settings(eps=40.0, n_samples=20), ["chart"])
    assert not rep.passed and rep.numerical_failure
    assert any(c["check_id"] == "eps_within_validated_range" for c in rep.checks)


def test_atomic_write_leaves_no_partial_file(tmp_path):
    path = tmp_path / "r.json"

    def broken(fh):
        fh.write("partial")
        raise RuntimeError("interrupted")

    with pytest.raises(RuntimeError):
        atomic_write(path, broken)
    assert not path.exists() and list(tmp_path.iterdir()) == []
    atomic_write(path, lambda fh: fh.write("ok"))
    assert path.read_text() == "ok"
