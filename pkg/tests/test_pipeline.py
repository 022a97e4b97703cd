import csv
import json
import os

import numpy as np
import pytest
import yaml

from horseshoes import cli, pipeline as P
from horseshoes.errors import ConfigError

from conftest import config_path


def small_dict():
    with open(config_path("cat_small.yaml")) as fh:
        return yaml.safe_load(fh)


@pytest.mark.parametrize("patch,fragment", [
    ({"target": {"delta": 0.3}}, "(0, 1/5)"),
    ({"target": {"delta": 0.0}}, "target.delta"),
    ({"nest": {"depth": 0}}, "nest.depth"),
    ({"nest": {"e": -0.1}}, "nest.e"),
    ({"scales": {"eps": 0.8, "eps1": 0.7, "eps0": 0.9}}, "eps < eps1 < eps0"),
    ({"orbit": {"length": 500}}, "orbit.length"),
    ({"cover": {"net_factor": 2.0}}, "net_factor"),
    ({"selection": {"n_grid": [100, 50]}}, "selection.n_grid"),
    ({"system": {"name": "pendulum"}}, "system.name"),
    ({"target": {"colour": 1}}, "target.colour"),
    ({"pressure": {"observables": ["psi0"]}}, "psi"),
])
def test_config_rejections(patch, fragment):
    data = small_dict()
    for key, sub in patch.items():
        data.setdefault(key, {}).update(sub)
    with pytest.raises(ConfigError) as exc:
        P.config_from_dict(data)
    assert fragment in str(exc.value)


def test_spectrum_dependent_checks():
    data = small_dict()
    data["target"]["r"] = 0.5          # chi / 3 = 0.32 for the cat map
    with pytest.raises(ConfigError, match="target.r"):
        P.run_extract(P.config_from_dict(data))
    data = small_dict()
    data["target"]["e"] = 1.5          # above the entropy of the cat map
    with pytest.raises(ConfigError, match="target.e"):
        P.run_extract(P.config_from_dict(data))


def test_observable_parsing():
    basis = P.ms.TestBasis()
    pts = np.array([[0.25, 0.5]])
    assert P.parse_observable("psi2", basis)(pts)[0] == pytest.approx(0.0, abs=1e-15)
    assert P.parse_observable("const:2.5", basis)(pts)[0] == 2.5
    assert P.parse_observable("coord:1", basis)(pts)[0] == 0.5


def test_config_round_trip():
    cfg = P.config_from_dict(small_dict())
    assert P.config_from_dict(cfg.as_dict()) == cfg


def test_deterministic_reports(small_report):
    again = P.run_nest(P.config_from_dict(small_dict()))
    assert again.to_json() == small_report.to_json()
    assert "timing" not in json.loads(again.to_json())


def test_emit_files(small_report, tmp_path):
    paths = P.emit(small_report, tmp_path)
    names = {os.path.basename(p) for p in paths}
    assert {"report.json", "timing.json", "separated_set.csv", "symbol_points.csv",
            "dropped.csv"} <= names
    with open(tmp_path / "report.json") as fh:
        data = json.load(fh)
    assert data == json.loads(small_report.to_json())
    counts = data["ledger"]["counts"]
    rows = lambda name: list(csv.reader(open(tmp_path / name)))
    assert len(rows("separated_set.csv")) - 1 == counts["card_E"]
    assert len(rows("symbol_points.csv")) - 1 == data["horseshoe"]["N"]
    assert len(rows("dropped.csv")) - 1 == counts["dropped"]
    json.load(open(tmp_path / "timing.json"))["total"]


def test_emit_empty_table_writes_header(small_report, tmp_path):
    rep = P.RunReport("extract", {"kind": "extract"}, {"dropped": (["index", "k"], [])}, {})
    P.emit(rep, tmp_path, write_json=False)
    assert list(csv.reader(open(tmp_path / "dropped.csv"))) == [["index", "k"]]
    assert not (tmp_path / "report.json").exists()


def test_cli_runs_and_reports(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["nest", "--config", config_path("cat_small.yaml"), "--out", str(out),
                     "--json"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["kind"] == "nest" and len(summary["nested_entropies"]) == 2
    assert (out / "report.json").exists() and not (out / "dropped.csv").exists()


def test_cli_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("target:\n  delta: 0.3\n")
    assert cli.main(["extract", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "(0, 1/5)" in capsys.readouterr().err


def test_cli_pipeline_failure(tmp_path, capsys):
    cfg = small_dict()
    cfg["nest"]["e"] = 0.9            # above the stage-1 entropy
    path = tmp_path / "high.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert cli.main(["nest", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_analyze_and_pressure(tmp_path):
    cfg = P.config_from_dict(small_dict())
    an = P.run_analyze(cfg)
    chi = an["spectrum"]["chi"]
    assert abs(chi - 0.9624236501) < 1e-6
    assert an["regularity"]["c2_min"] > 1.5
    pr = P.run_pressure(cfg)
    row = pr["pressure"][0]
    assert row["observable"] == "psi2" and row["item_v"]["pass"]
    assert abs(row["variational"]["value"] - pr["ledger"]["v"]["observables"]["psi2"]["pressure"]) < 1e-12
