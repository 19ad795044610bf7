import csv
import json
import math

import numpy as np
import pytest

from wildfire_psps.engine import EngineConfig, run
from wildfire_psps.errors import ConfigError, EmptyInput, InfeasiblePlan, IoError, SizeGuard
from wildfire_psps.evaluation import (NominalPlan, compare_restoration, emit_reports,
                                      evaluate_out_of_sample, extensive_form_solve,
                                      fairness_metrics, solve_plan, subtree_value)
from wildfire_psps.formulation import FormulationOptions, build_node
from wildfire_psps.instances import (ieee14_like, pmin_gap_instance, random_instance,
                                     restoration_instance, synthetic_73bus, toy3)
from wildfire_psps.scenarios import DisruptionEvent, tree_from_events
from wildfire_psps.solver import SolverParams, solve_mip


@pytest.fixture(scope="module")
def gap_plan():
    net, tree = pmin_gap_instance()
    ext = extensive_form_solve(net, tree)
    return net, tree, ext, NominalPlan.from_solution(ext.solutions[tree.root],
                                                     FormulationOptions())


def test_size_guard():
    net = synthetic_73bus()
    with pytest.raises(SizeGuard):
        extensive_form_solve(net, tree_from_events(net.horizon_T, []))


def test_subtree_value_of_leaf_equals_node_model():
    net, tree = pmin_gap_instance()
    for nid in tree.disruption_nodes():
        anchor = np.ones(net.n_components)
        m = build_node(net, tree, nid, anchor=anchor)
        direct = solve_mip(m.lp, SolverParams(mip_gap=1e-9)).objective
        val, shed, dmg = subtree_value(net, tree, nid, anchor)
        assert val == pytest.approx(direct)
        assert shed + dmg == pytest.approx(val)


def test_in_sample_evaluation_reproduces_extensive_value(gap_plan):
    net, tree, ext, plan = gap_plan
    b = evaluate_out_of_sample(plan, net, tree)
    assert b.total == pytest.approx(ext.value, rel=1e-7)
    assert b.recombination_error() <= 1e-9
    assert b.n_scenarios == len(tree.children(tree.root))


def test_path_list_input_matches_tree_input():
    net, tree = restoration_instance(variant=0)
    plan, _ = solve_plan(net, tree, FormulationOptions(), "extensive")
    ev = DisruptionEvent.make(2, ["l13"], [], {"l13": ["l13", "3"]})
    paths = [[ev], [], [], []]
    as_tree = tree_from_events(net.horizon_T, [(0.25, ev, [])], depth_limit=1)
    a = evaluate_out_of_sample(plan, net, paths)
    b = evaluate_out_of_sample(plan, net, as_tree)
    c = evaluate_out_of_sample(plan, net, as_tree, threads=2)
    assert a.total == pytest.approx(b.total) == pytest.approx(c.total)


def test_empty_testing_sets_are_rejected(gap_plan):
    net, tree, ext, plan = gap_plan
    with pytest.raises(EmptyInput):
        evaluate_out_of_sample(plan, net, [])


def test_plan_round_trip_and_feasibility(tmp_path, gap_plan):
    net, tree, ext, plan = gap_plan
    plan.save(tmp_path / "p.json")
    back = NominalPlan.load(tmp_path / "p.json", net)
    assert np.array_equal(back.z, plan.z) and back.beta == math.inf
    bad = NominalPlan.from_dict({**plan.to_dict(), "pg": (plan.pg * 0 + 1e4).tolist()})
    with pytest.raises(InfeasiblePlan):
        bad.check(net)
    short = NominalPlan.from_dict({**plan.to_dict(), "s": [[0.0]]})
    assert short.violations(net)


def test_fairness_metrics_on_hand_plan():
    net = toy3(T=4)

    class P:
        s = np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]])

    fm = fairness_metrics(P(), net)
    assert fm.max_gap == pytest.approx(2.0)
    assert fm.per_load == {"d2": 0.5, "d3": 0.0}
    assert fm.total_shed_fraction == pytest.approx(120.0 / 400.0)


def test_beta_zero_plan_is_fair():
    net, tree = random_instance(2)
    opts = FormulationOptions(beta=0.0)
    plan, _ = solve_plan(net, tree, opts, "extensive")
    assert fairness_metrics(plan, net).max_gap <= 1e-6


def test_compare_restoration_rows():
    net, tree = restoration_instance(variant=0)
    rows = compare_restoration(net, tree, [math.inf, 0.5], method="extensive")
    assert [(r.restoration, r.beta) for r in rows] == [(True, math.inf), (True, 0.5),
                                                      (False, math.inf), (False, 0.5)]
    by = {(r.restoration, r.beta): r for r in rows}
    for beta in (math.inf, 0.5):
        assert by[True, beta].objective <= by[False, beta].objective + 1e-6
        assert by[True, beta].total == pytest.approx(by[True, beta].objective, rel=1e-7)
    with pytest.raises(ConfigError):
        compare_restoration(net, tree, [])


def test_emit_reports_writes_and_merges(tmp_path, gap_plan):
    net, tree, ext, plan = gap_plan
    rep = run(net, tree, FormulationOptions(), EngineConfig(epsilon=0.0))
    fm = fairness_metrics(plan, net)
    emit_reports(tmp_path, report=rep, fairness={math.inf: fm}, extra={"command": "solve"})
    b = evaluate_out_of_sample(plan, net, tree)
    paths = emit_reports(tmp_path, breakdowns={"plan": b}, extra={"command": "evaluate"})
    summary = json.loads(paths["summary"].read_text())
    assert summary["solve"]["reason"] == rep.reason
    assert summary["command"] == "evaluate"
    assert summary["breakdowns"]["plan"]["total"] == pytest.approx(b.total)
    assert summary["fairness"]["inf"]["max_gap"] == fm.max_gap
    rows = list(csv.DictReader(open(tmp_path / "breakdown.csv")))
    parts = sum(float(rows[0][k]) for k in ("nominal_shed", "disruptive_shed", "damage"))
    assert parts == pytest.approx(float(rows[0]["total"]), rel=1e-9)
    fr = list(csv.DictReader(open(tmp_path / "fairness.csv")))
    assert {r["load_id"] for r in fr} == {d.id for d in net.loads}


def test_emit_reports_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        emit_reports(blocker / "sub", extra={"a": 1})


def test_nominal_plan_objective_is_its_shed_cost():
    net = ieee14_like()
    tree = tree_from_events(net.horizon_T, [])
    plan, obj = solve_plan(net, tree, FormulationOptions(beta=0.4))
    plan.check(net)
    assert obj == pytest.approx(float(np.asarray(net.priorities()) @ plan.s.sum(axis=1)),
                                rel=1e-9, abs=1e-9)
