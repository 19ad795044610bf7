import itertools
import json

import numpy as np
import pytest
from scipy.optimize import minimize

from wildfire_psps.cuts import (CutRecord, DualSolverParams, OracleResult, append_cut_log,
                                benders_cut, generate_cut, lagrangian_cut, lagrangian_value,
                                maximize_dual, min_norm_multiplier, square_min_cut,
                                strengthened_benders_cut)
from wildfire_psps.errors import CutGenerationError
from wildfire_psps.evaluation import subtree_value
from wildfire_psps.formulation import build_node
from wildfire_psps.instances import pmin_gap_instance, toy3
from wildfire_psps.scenarios import DisruptionEvent, tree_from_events


class TableOracle:
    """R(lam) = min_z f(z) + lam @ (anchor - z) by enumeration of binary z."""

    def __init__(self, f: dict, anchor):
        self.f = f
        self.anchor = np.asarray(anchor, float)
        self.calls = 0

    def __call__(self, lam):
        self.calls += 1
        lam = np.asarray(lam, float)
        best = min(self.f, key=lambda z: self.f[z] + lam @ (self.anchor - np.array(z)))
        v = self.f[best] + lam @ (self.anchor - np.array(best))
        return OracleResult(v, v, self.anchor - np.array(best), np.array(best, float))


def test_one_dimensional_dual_and_min_norm():
    # f(0) = 3, f(1) = 1 at anchor 0: R(lam) = min(3, 1 - lam) is maximal for lam <= -2
    oracle = TableOracle({(0,): 3.0, (1,): 1.0}, [0.0])
    lam, v, ok = maximize_dual(oracle, [0.0], DualSolverParams(), target=3.0)
    assert ok and v == pytest.approx(3.0) and lam[0] <= -2.0 + 1e-9
    lam, v, proven = min_norm_multiplier(TableOracle(oracle.f, [0.0]), 1, 3.0,
                                         norm_tol=1e-9)
    assert proven
    assert lam[0] == pytest.approx(-2.0, abs=1e-6)
    assert v == pytest.approx(3.0, abs=1e-6)


def test_min_norm_multiplier_reports_unreachable_target():
    oracle = TableOracle({(0,): 3.0, (1,): 1.0}, [0.0])
    assert min_norm_multiplier(oracle, 1, 3.5, max_calls=20) is None


def slsqp_min_norm(f: dict, anchor, target):
    """Independent route: min |lam|^2 subject to every linear piece >= target."""
    zs = [np.array(z, float) for z in f]
    cons = [{"type": "ineq", "fun": (lambda lam, z=z, fz=f[tuple(z.astype(int))]:
                                     fz + lam @ (anchor - z) - target)} for z in zs]
    res = minimize(lambda lam: lam @ lam, np.full(len(anchor), -50.0), constraints=cons,
                   method="SLSQP", options={"ftol": 1e-12, "maxiter": 500})
    return res.x


@pytest.mark.parametrize("seed", range(6))
def test_min_norm_matches_independent_qp(seed):
    rng = np.random.default_rng(seed)
    n = 2
    f = {z: float(rng.integers(0, 20)) for z in itertools.product([0, 1], repeat=n)}
    anchor = np.array(rng.integers(0, 2, n), float)
    target = f[tuple(anchor.astype(int))]
    lam, v, proven = min_norm_multiplier(TableOracle(f, anchor), n, target, norm_tol=1e-9)
    assert proven and v >= target - 1e-6
    ref = slsqp_min_norm(f, anchor, target)
    assert np.linalg.norm(lam) == pytest.approx(np.linalg.norm(ref), abs=1e-4)


@pytest.mark.parametrize("seed", range(6))
def test_binary_dual_closes_at_a_vertex(seed):
    rng = np.random.default_rng(100 + seed)
    n = 3
    f = {z: float(rng.integers(0, 50)) for z in itertools.product([0, 1], repeat=n)}
    anchor = np.array(rng.integers(0, 2, n), float)
    target = f[tuple(anchor.astype(int))]
    _, v, ok = maximize_dual(TableOracle(f, anchor), np.zeros(n), DualSolverParams(),
                             target=target)
    assert ok and v == pytest.approx(target, abs=1e-6)


def gap_node(fault="gB"):
    """Disruption node of the gap instance; the ``gB`` node has an LP gap."""
    net, tree = pmin_gap_instance()
    nid = next(n for n in tree.disruption_nodes() if tree.node(n).faults() == [fault])
    return net, tree, nid, build_node(net, tree, nid)


def exact_values(net, tree, nid):
    return {z: subtree_value(net, tree, nid, np.array(z, float))[0]
            for z in itertools.product([0, 1], repeat=net.n_components)}


@pytest.fixture(scope="module", params=["gB", "gA"])
def any_case(request):
    net, tree, nid, model = gap_node(request.param)
    return net, tree, nid, model, exact_values(net, tree, nid)


@pytest.fixture(scope="module")
def gap_case():
    net, tree, nid, model = gap_node()
    return net, tree, nid, model, exact_values(net, tree, nid)


@pytest.mark.parametrize("family", ["BC", "SBC", "LC", "SMC"])
@pytest.mark.parametrize("domain", ["binary", "interval"])
def test_cuts_are_valid_at_every_state(any_case, family, domain):
    net, tree, nid, model, f = any_case
    for anchor in [np.ones(net.n_components), np.array([1, 1, 0, 1, 1], float),
                   np.array([1, 0, 1, 0, 1], float)]:
        cut = generate_cut(family, model, anchor, domain, 1e-4, DualSolverParams())
        for z, fz in f.items():
            assert cut.value_at(z) <= fz + 1e-5 * max(1.0, abs(fz)), (family, anchor, z)


def test_lagrangian_value_bounds_node_value(gap_case):
    net, tree, nid, model, f = gap_case
    anchor = np.ones(net.n_components)
    rng = np.random.default_rng(0)
    for _ in range(5):
        lam = rng.normal(0, 100, net.n_components)
        v, g = lagrangian_value(model, anchor, lam)
        assert v <= f[tuple(anchor.astype(int))] + 1e-6
        assert g.shape == anchor.shape


def test_cut_tightness_pattern(gap_case):
    net, tree, nid, model, f = gap_case
    anchor = np.ones(net.n_components)
    fa = f[tuple(anchor.astype(int))]
    bc = benders_cut(model, anchor)
    sbc = strengthened_benders_cut(model, anchor)
    lc = lagrangian_cut(model, anchor)
    smc = square_min_cut(model, anchor, delta=1e-4)
    assert bc.intercept < fa - 1.0
    assert sbc.slope == bc.slope and sbc.intercept > bc.intercept
    assert lc.intercept == pytest.approx(fa, rel=1e-6)
    assert smc.intercept >= (1 - 1e-4) * fa - 1e-6
    assert np.linalg.norm(smc.slope) <= np.linalg.norm(lc.slope) + 1e-6


def test_square_min_cut_falls_back_when_target_is_out_of_reach(gap_case):
    net, tree, nid, model, f = gap_case
    anchor = np.ones(net.n_components)
    # from lam = 0 one oracle call cannot reach the node value
    dp = DualSolverParams(max_oracle_calls=1, initial=(0.0,) * net.n_components)
    cut = square_min_cut(model, anchor, 0.0, params=dp)
    assert cut.family == "SMC" and cut.note.startswith("InfeasibleTarget")
    with pytest.raises(ValueError):
        square_min_cut(model, anchor, -1.0)


def test_lagrangian_cut_with_tiny_budget_is_marked_loose(gap_case):
    net, tree, nid, model, f = gap_case
    dp = DualSolverParams(max_oracle_calls=1, initial=(0.0,) * net.n_components)
    cut = lagrangian_cut(model, np.ones(net.n_components), params=dp)
    assert not cut.tight and cut.note == "OracleLimit"


def test_cut_on_trivial_node_is_exact():
    net = toy3()
    ev = DisruptionEvent.make(2, [], ["l13"])
    tree = tree_from_events(net.horizon_T, [(0.5, ev, [])], depth_limit=1)
    model = build_node(net, tree, "w00001")
    anchor = np.ones(net.n_components)
    fa = subtree_value(net, tree, "w00001", anchor)[0]
    for fam in ("BC", "SBC", "LC", "SMC"):
        cut = generate_cut(fam, model, anchor)
        assert cut.intercept == pytest.approx(fa, rel=1e-3), fam


def test_cut_record_round_trip_and_key(tmp_path):
    c = CutRecord("w1", (1.0, -2.0), 5.0, (1.0, 0.0), "LC", note="x")
    assert CutRecord.from_dict(c.to_dict()) == c
    assert c.value_at((0.0, 1.0)) == pytest.approx(5.0 - 1.0 - 2.0)
    # same affine function written at another anchor
    d = CutRecord("w1", (1.0, -2.0), c.value_at((0.0, 0.0)), (0.0, 0.0), "SMC")
    assert c.key() == d.key()
    log = tmp_path / "cuts.jsonl"
    append_cut_log(log, c)
    append_cut_log(log, d)
    lines = log.read_text().splitlines()
    assert len(lines) == 2 and json.loads(lines[0])["owner"] == "w1"
    with pytest.raises(CutGenerationError):
        CutRecord("w1", (np.nan,), 0.0, (0.0,), "BC")


def test_bad_arguments():
    net, tree, nid, model = gap_node()
    with pytest.raises(ValueError):
        generate_cut("XYZ", model, np.ones(net.n_components))
    with pytest.raises(ValueError):
        lagrangian_cut(model, np.ones(net.n_components), z_domain="real")
    with pytest.raises(ValueError):
        DualSolverParams(tolerance=0.0)
