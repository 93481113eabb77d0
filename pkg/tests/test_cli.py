import json
import subprocess
import sys
from pathlib import Path

import pytest

from barycentric.cli import SchemaError, main, read_csv, scenario_from_dict, scenario_to_dict

ROOT = Path(__file__).resolve().parents[1]
FIX = ROOT / "fixtures"


def _load(name):
    return json.loads((FIX / name).read_text())


def test_plan_spiral_entry(tmp_path, capsys):
    assert main(["plan", str(FIX / "spiral_entry.json"), "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "spiral_entry.plan.json").read_text())
    assert summary["max_gap"] <= 1e-6
    assert all(j["gap"] <= 1e-6 for j in summary["junctions"])
    assert {"t", "kind", "residual_norm", "gap"} <= set(summary["junctions"][0])
    lines = (tmp_path / "spiral_entry.plan.csv").read_text().splitlines()
    assert lines[0] == "t,agent_id,px,py,vx,vy,ux,uy,g_value,mode"
    t = lines[5].split(",")[0]
    assert len(t.replace(".", "").replace("-", "").lstrip("0").split("e")[0]) <= 17


def test_infeasible_scenario_exit_1(tmp_path, capsys):
    assert main(["simulate", str(FIX / "infeasible.json"), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "g=" in err and "barycentric constraint" in err


def test_malformed_json_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert main(["plan", str(bad), "--out", str(tmp_path)]) == 3
    assert main(["plan", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 3


def test_schema_errors():
    doc = _load("spiral_entry.json")
    scenario_from_dict(doc)
    with pytest.raises(SchemaError):
        scenario_from_dict(dict(doc, extra=1))
    with pytest.raises(SchemaError):
        scenario_from_dict({k: v for k, v in doc.items() if k != "agents"})
    with pytest.raises(SchemaError):
        scenario_from_dict(dict(doc, kappa=1.5))
    with pytest.raises(SchemaError):
        scenario_from_dict(dict(doc, solver=dict(doc["solver"], chirality="left")))


def test_unknown_key_exit_3(tmp_path, capsys):
    doc = dict(_load("spiral_entry.json"), colour="blue")
    p = tmp_path / "s.json"
    p.write_text(json.dumps(doc))
    assert main(["plan", str(p), "--out", str(tmp_path)]) == 3


def test_round_trip():
    doc = _load("moving_reference.json")
    sc = scenario_from_dict(doc)
    again = scenario_to_dict(scenario_from_dict(scenario_to_dict(sc)))
    assert again == scenario_to_dict(sc)
    assert json.dumps(again, sort_keys=True) == json.dumps(scenario_to_dict(sc), sort_keys=True)


@pytest.mark.parametrize("name", ["on_spiral", "in_disk"])
def test_simulate_then_verify(tmp_path, capsys, name):
    assert main(["simulate", str(FIX / f"{name}.json"), "--out", str(tmp_path)]) == 0
    summary = tmp_path / f"{name}.simulate.json"
    doc = json.loads(summary.read_text())
    assert doc["monitors"]["all_ok"]
    series = read_csv(tmp_path / doc["csv"])
    assert len(series) == len(doc["scenario"]["agents"])
    assert main(["verify", str(summary)]) == 0
    # tampering with a stored verdict is caught
    doc["monitors"]["arrival"]["ok"] = not doc["monitors"]["arrival"]["ok"]
    summary.write_text(json.dumps(doc))
    assert main(["verify", str(summary)]) == 1


def test_oracle_subcommand(tmp_path, capsys):
    assert main(["oracle", str(FIX / "in_disk.json"), "--mesh", "20", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "in_disk.oracle.json").read_text())
    assert doc["M"] == 20 and doc["max_violation"] <= 1e-6
    assert main(["oracle", str(FIX / "in_disk.json"), "--mesh", "5", "--out", str(tmp_path)]) == 3


def test_bad_arguments_exit_3(capsys):
    assert main(["frobnicate"]) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "barycentric", "plan", str(FIX / "on_spiral.json"),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "on_spiral.plan.csv").exists()
