import json

import pytest

from rkgeo import cli


def run(tmp_path, command, text=None, *flags):
    args = [command]
    if text is not None:
        cfg = tmp_path / f"{command}.yaml"
        cfg.write_text(text)
        args += ["--config", str(cfg)]
    return cli.main(args + list(flags))


def load(out, name):
    return json.loads((out / name).read_text())


def test_describe_kropina_flags_nonintegrability(tmp_path, capsys):
    out = tmp_path / "o"
    assert run(tmp_path, "describe", "manifold:\n  catalog: kropina-plane\n", "--out", str(out)) == 0
    doc = load(out, "describe.json")
    checks = doc["checks"]
    assert not checks["nonintegrability"]["passed"]
    assert all(c["passed"] for k, c in checks.items() if k != "nonintegrability")
    assert "FAIL" in capsys.readouterr().out


def test_describe_heisenberg(tmp_path):
    out = tmp_path / "o"
    assert run(tmp_path, "describe", "manifold:\n  catalog: heisenberg\n", "--out", str(out)) == 0
    doc = load(out, "describe.json")
    assert doc["checks"]["nonintegrability"]["passed"]
    assert doc["frame"]["C_squared"] == pytest.approx(45.0)


def test_malformed_expression_reports_location(tmp_path, capsys):
    text = 'manifold:\n  dim: 2\n  omega: ["-1", "0.5*x +* y"]\n  lambda: "0"\n'
    assert run(tmp_path, "describe", text) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "column 25" in err


def test_malformed_yaml_reports_location(tmp_path, capsys):
    assert run(tmp_path, "describe", "manifold:\n  dim: [2\n") == 2
    assert "line" in capsys.readouterr().err


def test_bad_flags_are_config_errors(tmp_path):
    assert cli.main(["verify", "--tol", "-1"]) == 2
    assert cli.main(["verify", "--eps-schedule", "0.1,0.2"]) == 2
    assert run(tmp_path, "connect", "manifold:\n  catalog: euclidean-plane\n") == 2


def test_connect_coincident_kropina_is_hypothesis_violation(tmp_path):
    text = "manifold:\n  catalog: kropina-plane\nx0: [0, 0]\nx1: [0, 0]\n"
    assert run(tmp_path, "connect", text, "--out", str(tmp_path / "o")) == 3


def test_connect_upwind_kropina_is_solver_failure(tmp_path):
    text = "manifold:\n  catalog: kropina-plane\nx0: [0, 0]\nx1: [-1, 0]\n"
    out = tmp_path / "o"
    assert run(tmp_path, "connect", text, "--out", str(out)) == 4
    doc = load(out, "solutions.json")
    assert doc["solutions"][0]["diverged"]


def test_zermelo_targets(tmp_path):
    out = tmp_path / "half"
    assert run(tmp_path, "zermelo", 'wind: ["0.5", "0"]\nx0: [0, 0]\nx1: [1, 0]\n', "--out", str(out)) == 0
    sol = load(out, "solutions.json")["solutions"][0]
    assert sol["arrival_time"] == pytest.approx(2 / 3, abs=1e-5)
    assert (out / sol["path_file"]).read_text().startswith("s,x1,x2,v1,v2")
    out = tmp_path / "one"
    assert run(tmp_path, "zermelo", 'wind: ["1", "0"]\nx0: [0, 0]\nx1: [1, 0]\n', "--out", str(out)) == 0
    assert load(out, "solutions.json")["solutions"][0]["length_F"] == pytest.approx(0.5, abs=1e-5)


def test_zermelo_strong_wind_exit(tmp_path):
    assert run(tmp_path, "zermelo", 'wind: ["1.5*cos(x)", "0"]\nx0: [0, 0]\nx1: [1, 0]\n') == 2


def test_geodesic_and_reach(tmp_path):
    text = "manifold:\n  catalog: heisenberg\nx0: [0, 0, 0]\nv0: [0.3, 0.1, -0.5]\n"
    out = tmp_path / "g"
    assert run(tmp_path, "geodesic", text, "--out", str(out)) == 0
    assert load(out, "geodesic.json")["meta"]["max_drift_C"] < 1e-7
    out = tmp_path / "r"
    assert run(tmp_path, "reach", "target: drift\n", "--out", str(out)) == 0
    assert load(out, "reach.json")["distance"] <= 1e-4


def test_verify_perturbation_exit_and_counterexample(tmp_path):
    text = "inject_perturbation: true\nn_samples: 100\nn_geodesics: 1\nn_signals: 5\n"
    out = tmp_path / "v"
    assert run(tmp_path, "verify", text, "--out", str(out)) == 5
    assert load(out, "verify.json")["first_counterexample"]["property"] == "monotonicity"


def test_stdout_document_when_no_out(tmp_path, capsys):
    text = 'wind: ["0.5", "0"]\nx0: [0, 0]\nx1: [1, 0]\n'
    assert run(tmp_path, "zermelo", text, "--eps-schedule", "1e-4,1e-5,1e-6") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["format"] == "rkgeo-result/1" and doc["eps_schedule"] == [1e-4, 1e-5, 1e-6]
