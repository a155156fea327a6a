import json

import pytest
from click.testing import CliRunner

from sharpma.cli import main
from sharpma.geometry import ConvexDomain


@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.setenv("SHARPMA_OUTPUT_DIR", str(tmp_path))
    return CliRunner()


def test_list_experiments(runner):
    res = runner.invoke(main, ["list-experiments"])
    assert res.exit_code == 0 and "neg-q-2d" in res.output


def test_verify_one_family(runner, tmp_path):
    res = runner.invoke(main, ["verify", "--family", "NegPowerSuper", "--param", "n=2", "--param", "p=2.0", "--samples", "2000", "--report", "v.json"])
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "v.json").read_text())
    assert rep["pass"] and rep["results"][0]["family"] == "NegPowerSuper"
    assert {"family", "params", "max_violation", "worst_point", "pass"} <= set(rep["results"][0])


def test_verify_bad_parameter_exit_code(runner):
    res = runner.invoke(main, ["verify", "--family", "PosPowerSuper", "--param", "n=3", "--param", "gamma=5"])
    assert res.exit_code == 4


def test_usage_error(runner):
    assert runner.invoke(main, ["run"]).exit_code == 2
    assert runner.invoke(main, ["verify", "--family", "Nope"]).exit_code == 2


def test_solve_then_fit(runner, tmp_path):
    ConvexDomain.triangle().save(tmp_path / "T.json")
    res = runner.invoke(main, ["solve", "--domain", str(tmp_path / "T.json"), "--h", "0.03125", "--out", "u.csv"])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "u.csv").exists() and (tmp_path / "u.csv.meta.json").exists()
    res = runner.invoke(
        main, ["fit-exponent", "--solution", str(tmp_path / "u.csv"), "--facet", "0", "--model", "loglip", "--anchor", "0.5,0", "--report", "fit.json"]
    )
    assert res.exit_code == 0, res.output
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["model"] == "loglip" and fit["schema_version"] == 1 and len(fit["samples"]) >= 3


def test_solve_fd_upow(runner, tmp_path):
    ConvexDomain.unit_square().save(tmp_path / "sq.json")
    res = runner.invoke(main, ["solve", "--domain", str(tmp_path / "sq.json"), "--backend", "fd", "--rhs", "upow:-1", "--h", "0.0625", "--out", "w.csv"])
    assert res.exit_code == 0, res.output


def test_solve_convergence_exit_code(runner, tmp_path):
    ConvexDomain.unit_square().save(tmp_path / "sq.json")
    res = runner.invoke(main, ["solve", "--domain", str(tmp_path / "sq.json"), "--h", "0.0625", "--max-iter", "1", "--out", "x.csv"])
    assert res.exit_code == 3


def test_surface_tension(runner, tmp_path):
    res = runner.invoke(main, ["surface-tension", "--h", "0.03125", "--report", "st.json"])
    rep = json.loads((tmp_path / "st.json").read_text())
    assert rep["envelopes"]["pass"]
    assert res.exit_code == (0 if rep["pass"] else 1)


def test_run_config_file(runner, tmp_path):
    cfg = {
        "name": "tiny",
        "domain": ConvexDomain.unit_square().to_dict(),
        "rhs": "upow:-1",
        "solver": {"backend": "fd", "h": 1 / 32},
        "probe": {"facet": 2, "quantity": "value", "d0": "8h", "J": 3},
        "expected": {"oracle": "2/(n-q)", "q": -1, "tolerance": 0.5},
    }
    (tmp_path / "tiny.json").write_text(json.dumps(cfg))
    res = runner.invoke(main, ["run", "--config", str(tmp_path / "tiny.json")])
    assert res.exit_code == 0, res.output
    assert json.loads((tmp_path / "tiny.report.json").read_text())["pass"]


def test_run_invalid_config(runner, tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"name": "bad", "domain": {}, "expected": {"oracle": "nope"}}))
    assert runner.invoke(main, ["run", "--config", str(tmp_path / "bad.json")]).exit_code == 4
