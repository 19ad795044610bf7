import csv
import json
from pathlib import Path

import pytest

from wildfire_psps.cli import RunConfig, main
from wildfire_psps.errors import ConfigError
from wildfire_psps.instances import pmin_gap_instance
from wildfire_psps.network import save_network
from wildfire_psps.scenarios import save_tree

DATA = Path(__file__).parent / "data"


def write_config(tmp_path, **over) -> Path:
    cfg = {"network_path": str(DATA / "toy3.json"),
           "scenarios": {"generate": {"n": 20, "seed": 1, "depth_limit": 2,
                                      "ca_params": {"fault_rate": 0.05, "ignition_rate": 0.0,
                                                    "grid_cells": [4, 4]}}},
           "options": {"beta": 1.0},
           "engine": {"cut_family": "LC", "epsilon": 0.0, "max_iterations": 30},
           "solver": {"mip_gap": 1e-9},
           "output_dir": "out"}
    cfg.update(over)
    p = tmp_path / "config.json"
    p.write_text(json.dumps(cfg))
    return p


def gap_files(tmp_path):
    net, tree = pmin_gap_instance()
    save_network(net, tmp_path / "gap_net.json")
    save_tree(tree, tmp_path / "gap_tree.json")
    return {"network_path": "gap_net.json", "scenarios": {"load": {"tree_path": "gap_tree.json"}}}


def test_generate_solve_evaluate_compare(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["generate", "--config", str(cfg)]) == 0
    assert (out / "tree.json").exists() and (out / "tree_stats.json").exists()
    assert main(["solve", "--config", str(cfg)]) == 0
    for name in ("plan.json", "cuts.jsonl", "convergence.csv", "fairness.csv",
                 "run_summary.json", "incumbent.json"):
        assert (out / name).exists(), name
    summary = json.loads((out / "run_summary.json").read_text())
    assert summary["solve"]["reason"] == "Converged"
    assert main(["evaluate", "--config", str(cfg)]) == 0
    summary = json.loads((out / "run_summary.json").read_text())
    b = summary["breakdowns"]["plan"]
    # evaluating on the training tree reproduces the solve value
    assert b["total"] == pytest.approx(summary["solve"]["ub"], rel=1e-6)
    assert main(["compare", "--config", str(cfg), "--betas", "0,1"]) == 0
    rows = list(csv.DictReader(open(out / "comparison.csv")))
    assert len(rows) == 4


def test_nominal_only_tree_solves_with_zero_gap(tmp_path, capsys):
    cfg = write_config(tmp_path, scenarios={"generate": {
        "n": 3, "seed": 0, "ca_params": {"fault_rate": 0.0, "ignition_rate": 0.0}}})
    assert main(["solve", "--config", str(cfg)]) == 0
    assert "Converged" in capsys.readouterr().out
    summary = json.loads((tmp_path / "out" / "run_summary.json").read_text())
    assert summary["solve"]["gap"] == 0.0 and summary["solve"]["iterations"] == 1


def test_benders_on_gap_instance_records_stall(tmp_path):
    cfg = write_config(tmp_path, **gap_files(tmp_path))
    assert main(["solve", "--config", str(cfg), "--cut-family", "BC"]) == 0
    summary = json.loads((tmp_path / "out" / "run_summary.json").read_text())
    assert summary["solve"]["reason"] == "GapStall"
    assert summary["solve"]["gap"] > 1e-3


def test_missing_network_is_a_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, network_path="nope.json")
    assert main(["solve", "--config", str(cfg)]) == 2
    assert "network file not found" in capsys.readouterr().err


@pytest.mark.parametrize("bad", [
    {"scenarios": {}},
    {"scenarios": {"generate": {"n": 0}}},
    {"scenarios": {"load": {"tree_path": "missing.json"}}},
    {"engine": {"cut_family": "LC", "bogus": 1}},
    {"engine": {"cut_family": "ZZ"}},
    {"options": {"beta": -1}},
])
def test_bad_configs_exit_2(tmp_path, bad):
    cfg = write_config(tmp_path, **bad)
    assert main(["solve", "--config", str(cfg)]) == 2


def test_unreadable_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{oops")
    assert main(["solve", "--config", str(p)]) == 2
    assert main(["solve", "--config", str(tmp_path / "absent.json")]) == 2


def test_evaluate_needs_a_plan(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["evaluate", "--config", str(cfg)]) == 2


def test_infeasible_plan_exit_3(tmp_path):
    cfg = write_config(tmp_path, **gap_files(tmp_path))
    assert main(["solve", "--config", str(cfg)]) == 0
    plan_path = tmp_path / "out" / "plan.json"
    plan = json.loads(plan_path.read_text())
    plan["pg"] = [[1e6] * len(row) for row in plan["pg"]]
    plan_path.write_text(json.dumps(plan))
    assert main(["evaluate", "--config", str(cfg)]) == 3


def test_backend_error_exit_4(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    monkeypatch.setenv("PSPS_SOLVER_BACKEND", "unavailable")
    assert main(["solve", "--config", str(cfg)]) == 4


def test_overrides_and_relative_paths(tmp_path):
    cfg = RunConfig.load(write_config(tmp_path, **gap_files(tmp_path)))
    assert cfg.network_path == tmp_path / "gap_net.json"
    assert cfg.output_dir == tmp_path / "out"
    ec = cfg.engine_config()
    assert ec.backward_gap == 1e-9 and ec.cut_family == "LC"
    with pytest.raises(ConfigError):
        RunConfig.from_dict([])
    out2 = tmp_path / "elsewhere"
    assert main(["solve", "--config", str(tmp_path / "config.json"), "--output", str(out2),
                 "--beta", "0", "--epsilon", "0.5"]) == 0
    summary = json.loads((out2 / "run_summary.json").read_text())
    assert summary["solve"]["config"]["epsilon"] == 0.5
    assert json.loads((out2 / "plan.json").read_text())["beta"] == 0.0

