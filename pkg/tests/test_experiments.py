import csv
import json
import math

import pytest

from sharpma.errors import ParameterError
from sharpma.experiments import (
    BUNDLED,
    ExperimentConfig,
    bundled_config,
    judge,
    list_experiments,
    oracle_target,
    output_dir,
    run_experiment,
)
from sharpma.geometry import ConvexDomain


def test_bundled_names():
    names = [e["name"] for e in list_experiments()]
    assert {"neg-q-2d", "lozenge-selftest", "cube-q0-3d", "band-q1-4d", "gas-dimer-2d"} <= set(names)
    for n in names:
        assert bundled_config(n).name == n


def test_unknown_oracle_rejected():
    d = dict(BUNDLED["neg-q-2d"])
    d["expected"] = {"oracle": "3/n"}
    with pytest.raises(ParameterError):
        ExperimentConfig.from_dict(d)


@pytest.mark.parametrize(
    "patch", [{"source": {"kind": "magic"}}, {"probe": {"quantity": "curvature"}}, {"rhs": "bogus:1"}, {"solver": {"backend": "x"}}, {"colour": 1}]
)
def test_config_validation(patch):
    d = dict(BUNDLED["neg-q-2d"])
    d.update(patch)
    with pytest.raises(ParameterError):
        ExperimentConfig.from_dict(d)


def test_config_hash_is_deterministic_and_sensitive():
    a, b = bundled_config("neg-q-2d"), bundled_config("neg-q-2d")
    assert a.config_hash() == b.config_hash()
    b.seed = 1
    assert a.config_hash() != b.config_hash()


def test_domain_file_resolved_relative_to_config(tmp_path):
    ConvexDomain.unit_square().save(tmp_path / "sq.json")
    d = {k: v for k, v in BUNDLED["neg-q-2d"].items() if k != "domain"}
    d["domain_file"] = "sq.json"
    (tmp_path / "exp.json").write_text(json.dumps(d))
    cfg = ExperimentConfig.load(tmp_path / "exp.json")
    assert ConvexDomain.from_dict(cfg.domain).kind == "box"


def test_oracles():
    assert oracle_target({"oracle": "2/(n-q)", "q": -1}, 2)["value"] == pytest.approx(2 / 3)
    assert oracle_target({"oracle": "2/n"}, 3)["value"] == pytest.approx(2 / 3)
    band = oracle_target({"oracle": "band(2/(n-q),1)", "q": 1, "tolerance": 0.05}, 4)["band"]
    assert band == pytest.approx([2 / 3 - 0.05, 1.0])

    class Fit:
        exponent = 0.7
        r2 = 0.999
        slope = 0.3

    assert judge(oracle_target({"oracle": "band(2/(n-q),1)", "q": 1}, 4), Fit, None)
    assert not judge(oracle_target({"oracle": "2/n", "tolerance": 0.01}, 3), Fit, None)
    assert judge(oracle_target({"oracle": "gradient-log", "value": 1 / math.pi, "tolerance": 0.1}, 2), Fit, None)


def test_output_dir_env(monkeypatch, tmp_path):
    monkeypatch.setenv("SHARPMA_OUTPUT_DIR", str(tmp_path))
    assert output_dir() == tmp_path


def test_neg_q_2d_passes(tmp_path):
    rep = run_experiment(bundled_config("neg-q-2d"), out_dir=tmp_path)
    assert rep["stage"] == "done" and rep["pass"]
    assert abs(rep["fit"]["coefficients"]["beta"] - 2 / 3) <= 0.05
    on_disk = json.loads((tmp_path / "neg-q-2d.report.json").read_text())
    assert on_disk["config_hash"] == rep["config_hash"] and on_disk["schema_version"] == 1
    rows = list(csv.DictReader((tmp_path / "neg-q-2d.samples.csv").open()))
    assert len(rows) == 4 and rows[0]["experiment"] == "neg-q-2d"


def test_lozenge_selftest(tmp_path):
    rep = run_experiment(bundled_config("lozenge-selftest"), out_dir=tmp_path)
    assert rep["stage"] == "done"
    assert rep["fit"]["coefficients"]["b"] == pytest.approx(1 / math.pi, rel=0.1)
    # the bundled check asks for |fd det - 1| <= 1e-4 on 100 points with dist >= 0.1
    assert rep["checks"]["hessian-det"]["pass"], rep["checks"]["hessian-det"]
    assert rep["pass"]


def test_failure_records_stage(tmp_path):
    d = dict(BUNDLED["neg-q-2d"])
    d["probe"] = {"facet": 2, "quantity": "value", "d0": 5.0, "J": 3}
    d["solver"] = {"backend": "fd", "h": 1 / 16}
    rep = run_experiment(ExperimentConfig.from_dict(d), out_dir=tmp_path)
    assert rep["stage"] == "probe" and not rep["pass"]
    assert rep["error"]["type"] == "GeometryError"
    assert (tmp_path / "neg-q-2d.report.json").exists()


def test_run_is_deterministic(tmp_path):
    d = dict(BUNDLED["neg-q-2d"])
    d["solver"] = {"backend": "fd", "h": 1 / 32, "stencil_width": 2}
    cfg = ExperimentConfig.from_dict(d)
    a = run_experiment(cfg, write=False)
    b = run_experiment(cfg, write=False)
    assert a["fit"]["coefficients"] == b["fit"]["coefficients"]


@pytest.mark.parametrize(
    "checks", [{"spectral": {}}, {"envelopes": {"facet": 2, "r": 0.3}}, {"envelopes": {"facet": 2, "r": 0.3, "w1": 0.1, "colour": 1}}]
)
def test_check_validation(checks):
    d = dict(BUNDLED["gas-dimer-2d"])
    d["checks"] = checks
    with pytest.raises(ParameterError):
        ExperimentConfig.from_dict(d)


def test_gas_dimer_envelope_stage(tmp_path):
    d = dict(BUNDLED["gas-dimer-2d"])
    d["solver"] = {"backend": "geometric", "h": 1 / 32}
    rep = run_experiment(ExperimentConfig.from_dict(d), out_dir=tmp_path)
    assert rep["stage"] == "done", rep.get("error")
    assert rep["checks"]["envelopes"]["pass"]
