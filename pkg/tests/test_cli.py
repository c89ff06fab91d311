import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from fluidlb import Network
from fluidlb.cli import main
from fluidlb.jsonio import dumps


@pytest.fixture()
def sym_instance(tmp_path):
    path = tmp_path / "sym_1x2.json"
    path.write_text(json.dumps({
        "frontends": 1, "backends": 2,
        "arcs": [[0, 0, 1.0], [0, 1, 1.0]],
        "lambda": [1.0],
        "rates": [{"family": "sqrt", "a": 1.0, "b": 2.0},
                  {"family": "sqrt", "a": 1.0, "b": 2.0}],
    }))
    return str(path)


def test_solve_prints_solution(sym_instance, capsys):
    assert main(["solve", sym_instance]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["opt_value"] == pytest.approx(2.25, abs=1e-9)
    assert out["c"] == pytest.approx([2.5], abs=1e-9)
    assert out["kkt_residual"] < 1e-6
    assert sorted(map(tuple, out["active_arcs"])) == [(0, 0), (0, 1)]


def test_missing_file_is_usage_error(tmp_path, capsys):
    rc = main(["solve", str(tmp_path / "nope.json")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "usage"


def test_malformed_instance_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{\"frontends\": 1}")
    assert main(["solve", str(bad)]) == 2


def test_domain_error_exit_code(tmp_path, capsys):
    path = tmp_path / "overloaded.json"
    path.write_text(json.dumps({
        "frontends": 1, "backends": 2,
        "arcs": [[0, 0, 1.0], [0, 1, 1.0]],
        "lambda": [100.0],
        "rates": [{"family": "hyperbolic", "k": 5.0, "s": 1.0},
                  {"family": "hyperbolic", "k": 5.0, "s": 1.0}],
    }))
    rc = main(["solve", str(path)])
    assert rc == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "infeasible-instance"


def test_unknown_flag_exits_2(sym_instance):
    proc = subprocess.run(
        [sys.executable, "-m", "fluidlb.cli", "solve", sym_instance, "--bogus"],
        capture_output=True,
    )
    assert proc.returncode == 2


def test_simulate_writes_trajectory(sym_instance, tmp_path, capsys):
    out_csv = tmp_path / "traj.csv"
    rc = main([
        "simulate", sym_instance, "--policy", "dgd", "--eta", "0.4",
        "--horizon", "2", "--init", "mix:0.1", "--seed", "3",
        "--out", str(out_csv),
    ])
    assert rc == 0
    metrics = json.loads(capsys.readouterr().out)
    assert np.isfinite(metrics["gap"])
    with open(out_csv) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        assert header == ["t", "N_0", "N_1", "x_00", "x_01", "inflight_total"]
        first = next(reader)
        assert float(first[0]) == 0.0
        # the trajectory round-trips at full precision
        assert float(first[3]) + float(first[4]) == pytest.approx(1.0, abs=1e-12)


def test_stability_subcommand(sym_instance, capsys):
    assert main(["stability", sym_instance, "--eta", "0.4"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["lhs13"] == pytest.approx(0.8, abs=1e-9)
    assert rep["stable"] is True
    assert rep["eta_critical"] == pytest.approx([0.5], abs=1e-9)


def test_project_subcommand(capsys):
    assert main(["project", "--z", "5,0", "--x", "1,0"]) == 0
    assert json.loads(capsys.readouterr().out)["v"] == [0.0, 0.0]
    assert main(["project", "--z", "1,9,3", "--x", "0.5,0,0.5", "--mask", "1,0,1"]) == 0
    v = json.loads(capsys.readouterr().out)["v"]
    assert v[1] == 0.0


def test_experiment_csv_and_instance_roundtrip(tmp_path, capsys):
    out_csv = tmp_path / "table.csv"
    dump_dir = tmp_path / "instances"
    rc = main([
        "experiment", "local", "--mu-f", "2", "--mu-b", "2", "--tau-max", "1",
        "--alpha", "0.5", "--reps", "2", "--seed", "7", "--horizon", "3",
        "--out", str(out_csv), "--dump-instances", str(dump_dir),
    ])
    assert rc == 0
    with open(out_csv) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3  # 2 replications + 1 aggregate
    assert rows[0]["alpha"] == "0.5"

    # round-trip: dumped instances reload identically
    from fluidlb.experiments import ExperimentParams, generate_instance, _instance_seed

    params = ExperimentParams(mu_f=2, mu_b=2, tau_max=1.0, seed=7, replications=2)
    for rep in range(2):
        reloaded = Network.from_json(dump_dir / f"instance_{rep:03d}.json")
        assert reloaded == generate_instance(params, _instance_seed(params, rep))


def test_float17_serialization_roundtrip():
    vals = [1 / 3, 0.1, 2.25, 1e-17, 123456.789012345678, float(np.pi)]
    text = dumps({"v": vals})
    back = json.loads(text)["v"]
    assert back == vals  # bit-exact round trip
