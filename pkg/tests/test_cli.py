import json
import subprocess
import sys

import pytest

from acpoisson.cli import load_config, main, UsageError


def run(*args):
    return main(list(args))


def test_list_scenarios(capsys):
    assert run("list-scenarios") == 0
    out = capsys.readouterr().out
    assert "s1-rotated-translator" in out and "s4-degenerate" in out


def test_usage_errors(tmp_path, capsys):
    assert run("verify", "--bogus") == 2
    assert run("verify", "--scenario", "nope", "--out", str(tmp_path)) == 2
    assert run("verify", "--suite", "nonsense", "--out", str(tmp_path)) == 2
    assert run("simulate", "--q0", "1,2", "--out", str(tmp_path)) == 2
    assert run() == 2


def test_config_parsing(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('eps = 0.02\nseed = 3\nquad_nodes = 32\nscheme = "ray"\n[parameters]\nconn_amp = 0.5\n')
    settings, params = load_config(cfg)
    assert settings == {"eps": 0.02, "seed": 3, "quad_nodes": 32, "scheme": "ray"}
    assert params == {"conn_amp": 0.5}
    for text in ['wat = 1\n', 'eps = "big"\n', 'seed = 1.5\n', '[parameters]\nomega = "x"\n', 'eps = \n']:
        cfg.write_text(text)
        with pytest.raises(UsageError):
            load_config(cfg)
    cfg.write_text('[parameters]\nunknown = 1.0\n')
    assert run("verify", "--config", str(cfg), "--suite", "chart", "--out", str(tmp_path)) == 2


def test_verify_chart_suite_writes_report(tmp_path, capsys):
    code = run("verify", "--scenario", "s1", "--suite", "chart", "--out", str(tmp_path))
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["scenario"] == "s1-rotated-translator" and all(c["pass"] for c in rep["checks"])


def test_verify_beyond_eps_max_exit_code(tmp_path):
    assert run("verify", "--scenario", "s1", "--eps", "40", "--suite", "chart", "--out", str(tmp_path)) == 3


def test_average_product_columns_identical(tmp_path):
    assert run("average", "--scenario", "product", "--grid", "2", "--out", str(tmp_path)) == 0
    import csv

    rows = list(csv.DictReader(open(tmp_path / "average.csv")))
    assert len(rows) == 16
    for r in rows:
        for key in [k for k in r if k.startswith("pi_eps_")]:
            assert float(r[key]) == pytest.approx(float(r[key.replace("pi_eps_", "pi_avg_")]), abs=1e-15)
    summary = json.loads((tmp_path / "average.json").read_text())
    assert summary["max_abs_Q"] == 0.0


def test_average_at_zero_returns_P(tmp_path):
    assert run("average", "--scenario", "s1", "--eps", "0", "--grid", "2", "--out", str(tmp_path)) == 0
    summary = json.loads((tmp_path / "average.json").read_text())
    assert summary["max_avg_minus_pi_eps"] < 1e-12


def test_isotopy_identity_at_zero(tmp_path):
    assert run("isotopy", "--scenario", "s1", "--eps", "0", "--points", "3", "--out", str(tmp_path)) == 0
    summary = json.loads((tmp_path / "isotopy.json").read_text())
    assert summary["residual"] < 1e-12 and summary["ode_stats"]["steps"] == 0


def test_simulate_writes_csv(tmp_path):
    assert run("simulate", "--scenario", "s1", "--horizon", "2", "--q0", "0.6,-0.3,0.2,0.4",
               "--out", str(tmp_path)) == 0
    header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,x1,x2,xi1,xi2,mon_F,mon_xi1,mon_xi2,dt"
    summary = json.loads((tmp_path / "trajectory.json").read_text())
    assert summary["drift"]["F"] < 1e-8


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "acpoisson", "list-scenarios"], capture_output=True, text=True)
    assert proc.returncode == 0 and "product" in proc.stdout
