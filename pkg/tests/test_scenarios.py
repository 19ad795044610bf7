import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wildfire_psps.errors import (EmptyInput, InconsistentTree, InvalidParams, ParseError,
                                  ValidationError)
from wildfire_psps.instances import ieee14_like, toy3
from wildfire_psps.scenarios import (CaParams, DisruptionEvent, ScenarioTree, _burn,
                                     build_tree, layout_components, load_tree, save_tree,
                                     simulate_paths, spread_set, tree_from_events,
                                     validate_tree)

T = 5
COMPS = ["1", "2", "3", "g1", "l12", "l13"]


def leaf_mass(tree: ScenarioTree) -> float:
    return sum(tree.path_probability(n) for n in tree.leaves())


events = st.builds(
    lambda onset, faults, exo: DisruptionEvent.make(onset, faults, exo),
    st.integers(2, T), st.sets(st.sampled_from(COMPS), max_size=2),
    st.sets(st.sampled_from(COMPS), max_size=1))
paths = st.lists(events, max_size=3).map(
    lambda evs: list({e.onset: e for e in sorted(evs, key=lambda e: e.onset)}.values()))


@settings(max_examples=60, deadline=None)
@given(st.lists(paths, min_size=1, max_size=12), st.integers(1, 3))
def test_built_trees_are_probability_trees(sample, depth):
    tree = build_tree(sample, T, depth)
    for nid, node in tree.nodes.items():
        if node.children:
            assert abs(sum(c.probability for c in tree.children(nid)) - 1.0) <= 1e-9
    assert leaf_mass(tree) == pytest.approx(1.0, abs=1e-9)
    assert max((tree.depth(n) for n in tree.disruption_nodes()), default=0) <= depth
    # first-level siblings are distinct events
    keys = [(c.onset, tuple(c.faults()), tuple(c.exogenous())) for c in tree.children("root")]
    assert len(keys) == len(set(keys))
    assert ScenarioTree.from_dict(tree.to_dict()) == tree


def test_identical_paths_merge_with_empirical_weights():
    a = DisruptionEvent.make(2, ["l12"])
    b = DisruptionEvent.make(3, ["g1"], spread={"g1": ["1"]})
    tree = build_tree([[a], [a], [b], []], T)
    probs = sorted(c.probability for c in tree.children("root"))
    assert probs == [0.25, 0.25, 0.5]
    nominal = [c for c in tree.children("root") if tree.is_nominal(c.id)]
    assert len(nominal) == 1 and nominal[0].probability == 0.25


def test_depth_limit_truncates_paths():
    evs = [DisruptionEvent.make(t, ["l12"]) for t in (2, 3, 4)]
    tree = build_tree([evs], T, depth_limit=2)
    assert max(tree.depth(n) for n in tree.disruption_nodes()) == 2


def test_build_tree_rejects_bad_input():
    with pytest.raises(EmptyInput):
        build_tree([], T)
    late = DisruptionEvent.make(T + 1, ["l12"])
    with pytest.raises(InconsistentTree):
        build_tree([[late]], T)
    a, b = DisruptionEvent.make(3, ["l12"]), DisruptionEvent.make(2, ["g1"])
    with pytest.raises(InconsistentTree):
        build_tree([[a, b]], T)


def test_validate_tree_catches_bad_probabilities_and_components():
    tree = tree_from_events(T, [(0.4, DisruptionEvent.make(2, ["l12"]), [])])
    d = tree.to_dict()
    d["nodes"]["w00001"]["probability"] = 0.5
    with pytest.raises(ValidationError):
        ScenarioTree.from_dict(d)
    with pytest.raises(ValidationError):
        validate_tree(tree, ["1", "2"])
    validate_tree(tree, COMPS)


def test_tree_from_events_adds_residual_nominal_child():
    ev = DisruptionEvent.make(2, ["l12"])
    ev2 = DisruptionEvent.make(4, ["g1"])
    tree = tree_from_events(T, [(0.3, ev, [(0.5, ev2, [])])])
    assert tree.stats()["nominal_probability"] == pytest.approx(0.7)
    assert tree.path_probability("w00002") == pytest.approx(0.15)
    assert tree.disruption_nodes() == ["w00001", "w00002"]


def test_tree_json_round_trip(tmp_path):
    ev = DisruptionEvent.make(2, ["l12"], ["3"], {"l12": ["l12", "2"]})
    tree = tree_from_events(T, [(0.3, ev, [])])
    save_tree(tree, tmp_path / "t.json")
    assert load_tree(tmp_path / "t.json", COMPS) == tree
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(ParseError):
        load_tree(tmp_path / "bad.json")


def test_spread_set_always_contains_origin():
    net = toy3()
    params = CaParams(grid_cells=(4, 4), spread_prob=0.0,
                      component_cells=layout_components(net, (4, 4)))
    rng = np.random.default_rng(0)
    assert "g1" in spread_set(net, params, "g1", 2, rng)


def test_certain_isotropic_spread_is_a_square():
    params = CaParams(grid_cells=(9, 9), spread_prob=1.0)
    origin = np.zeros((9, 9), bool)
    origin[4, 4] = True
    burned = _burn(params, origin, 2, np.random.default_rng(0))
    assert burned.sum() == 25 and burned[2:7, 2:7].all()


def test_simulation_is_reproducible_and_valid():
    net = ieee14_like()
    params = CaParams(fault_rate=0.01, ignition_rate=0.0005)
    a = build_tree(simulate_paths(net, params, 50, seed=7), net.horizon_T)
    b = build_tree(simulate_paths(net, params, 50, seed=7), net.horizon_T)
    assert a.to_dict() == b.to_dict()
    validate_tree(a, net.components)
    c = build_tree(simulate_paths(net, params, 50, seed=8), net.horizon_T)
    assert c.to_dict() != a.to_dict()


def test_zero_rates_give_nominal_only_tree():
    net = toy3()
    params = CaParams(fault_rate=0.0, ignition_rate=0.0)
    tree = build_tree(simulate_paths(net, params, 5, seed=0), net.horizon_T)
    assert tree.disruption_nodes() == []
    assert leaf_mass(tree) == 1.0


@pytest.mark.parametrize("kw", [{"fault_rate": 1.5}, {"spread_prob": -0.1},
                                {"wind_bias": 0.0}, {"grid_cells": (0, 3)}])
def test_invalid_ca_params(kw):
    with pytest.raises(InvalidParams):
        CaParams(**kw).validate()


def test_simulate_paths_rejects_bad_counts():
    with pytest.raises(InvalidParams):
        simulate_paths(toy3(), CaParams(), 0, seed=0)


def test_windward_spread_reaches_further():
    params = CaParams(grid_cells=(21, 21), spread_prob=0.3, wind_bias=3.0, wind_direction=0.0)
    origin = np.zeros((21, 21), bool)
    origin[10, 10] = True
    down = up = 0
    rng = np.random.default_rng(1)
    for _ in range(40):
        b = _burn(params, origin, 5, rng)
        down += b[11:, :].sum()
        up += b[:10, :].sum()
    assert down > up
