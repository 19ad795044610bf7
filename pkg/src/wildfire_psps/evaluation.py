"""Extensive-form oracle, out-of-sample evaluation and report emission."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput, InfeasiblePlan, IoError, SizeGuard
from .formulation import (FormulationOptions, StageSolution, build_extensive, build_root,
                          extract_solution)
from .network import PowerNetwork
from .scenarios import ScenarioTree, build_tree, tree_from_events
from .solver import SolverParams, require_optimal, solve_mip

MAX_EXTENSIVE_NODES = 50
MAX_EXTENSIVE_COMPONENTS = 60
EXACT = SolverParams(mip_gap=1e-9)


@dataclass
class ExtensiveResult:
    value: float
    bound: float
    solutions: dict  # node id -> StageSolution


def extensive_form_solve(net: PowerNetwork, tree: ScenarioTree,
                         options: FormulationOptions = FormulationOptions(),
                         params: SolverParams = EXACT) -> ExtensiveResult:
    """Solve the whole tree as one MIP (small instances only)."""
    if len(tree.nodes) > MAX_EXTENSIVE_NODES or net.n_components > MAX_EXTENSIVE_COMPONENTS:
        raise SizeGuard(f"extensive form limited to {MAX_EXTENSIVE_NODES} nodes and "
                        f"{MAX_EXTENSIVE_COMPONENTS} components "
                        f"(got {len(tree.nodes)}, {net.n_components})")
    ext = build_extensive(net, tree, options)
    out = require_optimal(solve_mip(ext.lp, params), "extensive form")
    sols = {nid: extract_solution(net, tree, nid, blk, out.x,
                                  r=ext.r if nid == tree.root else None,
                                  nu=ext.nu.get(nid), objective=math.nan)
            for nid, blk in ext.blocks.items()}
    return ExtensiveResult(out.objective, out.bound, sols)


def subtree_value(net: PowerNetwork, tree: ScenarioTree, nid: str, anchor,
                  params: SolverParams = EXACT):
    """Exact cost-to-go of disruption node ``nid`` at inherited state ``anchor``.

    Returns ``(value, shed, damage)`` with descendants probability-weighted.
    """
    ext = build_extensive(net, tree, FormulationOptions(), top=nid, anchor=anchor)
    out = require_optimal(solve_mip(ext.lp, params), f"subtree {nid}")
    shed = dmg = 0.0
    for bid, blk in ext.blocks.items():
        sol = extract_solution(net, tree, bid, blk, out.x, nu=ext.nu[bid])
        shed += ext.weights[bid] * sol.shed_cost
        dmg += ext.weights[bid] * sol.damage_cost
    return out.objective, shed, dmg


# -- nominal plans --------------------------------------------------------------

@dataclass
class NominalPlan:
    z: np.ndarray      # (components, T)
    s: np.ndarray      # (loads, T)
    pg: np.ndarray
    pl: np.ndarray
    theta: np.ndarray
    r: np.ndarray | None = None
    beta: float = math.inf
    restoration: bool = True
    fairness_enabled: bool = True

    @classmethod
    def from_solution(cls, sol: StageSolution, options: FormulationOptions) -> "NominalPlan":
        return cls(np.asarray(sol.z, float), np.asarray(sol.s, float), np.asarray(sol.pg, float),
                   np.asarray(sol.pl, float), np.asarray(sol.theta, float),
                   None if sol.r is None else np.asarray(sol.r, float),
                   options.beta, options.restoration, options.fairness_enabled)

    @property
    def options(self) -> FormulationOptions:
        return FormulationOptions(self.beta, self.restoration, self.fairness_enabled)

    def state(self, t: int) -> np.ndarray:
        return self.z[:, t - 1]

    def violations(self, net: PowerNetwork, tol: float = 1e-6) -> list[str]:
        """Root-stage constraints violated by the plan (empty when feasible)."""
        T = net.horizon_T
        shapes = {"z": (net.n_components, T), "s": (len(net.loads), T),
                  "pg": (len(net.generators), T), "pl": (len(net.lines), T),
                  "theta": (len(net.buses), T)}
        for k, shp in shapes.items():
            if np.shape(getattr(self, k)) != shp:
                return [f"{k}: shape {np.shape(getattr(self, k))} != {shp}"]
        m = build_root(net, tree_from_events(T, []), self.options)
        x = np.zeros(m.lp.n_cols)
        b = m.block
        for idx, val in ((b.z, self.z), (b.s, self.s), (b.pg, self.pg), (b.pl, self.pl),
                         (b.th, self.theta)):
            x[idx] = val
        if m.r is not None:
            if self.r is None:
                return ["r: missing restoration variables"]
            x[m.r] = self.r
        cum = self.s.sum(axis=1)
        for j, name in enumerate(m.lp.col_names):
            if name.startswith("fair_max"):
                x[j] = cum.max()
            elif name.startswith("fair_min"):
                x[j] = cum.min()
        return m.lp.violations(x, tol)

    def check(self, net: PowerNetwork) -> "NominalPlan":
        bad = self.violations(net)
        if bad:
            raise InfeasiblePlan(f"plan violates {len(bad)} constraints, e.g. {bad[:3]}")
        return self

    def to_dict(self) -> dict:
        arr = lambda v: None if v is None else np.asarray(v).tolist()
        return {"z": arr(self.z), "s": arr(self.s), "pg": arr(self.pg), "pl": arr(self.pl),
                "theta": arr(self.theta), "r": arr(self.r),
                "beta": None if math.isinf(self.beta) else self.beta,
                "restoration": self.restoration, "fairness_enabled": self.fairness_enabled}

    @classmethod
    def from_dict(cls, d: dict) -> "NominalPlan":
        arr = lambda v: None if v is None else np.asarray(v, float)
        beta = d.get("beta")
        return cls(arr(d["z"]), arr(d["s"]), arr(d["pg"]), arr(d["pl"]), arr(d["theta"]),
                   arr(d.get("r")), math.inf if beta is None else float(beta),
                   bool(d.get("restoration", True)), bool(d.get("fairness_enabled", True)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path, net: PowerNetwork | None = None) -> "NominalPlan":
        plan = cls.from_dict(json.loads(Path(path).read_text()))
        return plan.check(net) if net is not None else plan


# -- out-of-sample evaluation ------------------------------------------------------

@dataclass(frozen=True)
class EvaluationBreakdown:
    nominal_shed_cost: float
    disruptive_shed_cost: float
    damage_cost: float
    total: float
    n_scenarios: int
    per_scenario: tuple = field(default=(), repr=False)

    def recombination_error(self) -> float:
        parts = self.nominal_shed_cost + self.disruptive_shed_cost + self.damage_cost
        return abs(parts - self.total) / max(1.0, abs(self.total))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_scenario"] = [list(x) for x in self.per_scenario]
        return d


def _as_tree(testing_set, T: int) -> ScenarioTree:
    if isinstance(testing_set, ScenarioTree):
        if not testing_set.children(testing_set.root):
            raise EmptyInput("testing tree has no scenarios")
        return testing_set
    paths = list(testing_set)
    if not paths:
        raise EmptyInput("empty testing set")
    depth = max(1, max(len(p) for p in paths))
    return build_tree(paths, T, depth)


def evaluate_out_of_sample(plan: NominalPlan, net: PowerNetwork, testing_set,
                           params: SolverParams = EXACT, threads: int = 1) -> EvaluationBreakdown:
    """Expected cost of a fixed root plan with exact recourse per test scenario.

    ``testing_set`` is a scenario tree (its root children are the test
    realizations, weighted by probability) or a list of sample paths
    (lists of :class:`DisruptionEvent`, equally weighted).
    """
    plan.check(net)
    tree = _as_tree(testing_set, net.horizon_T)
    w = np.asarray(net.priorities())
    shed_t = w @ plan.s  # per-period weighted shed of the plan
    kids = tree.children(tree.root)

    def one(child):
        pre = float(shed_t[: child.onset - 1].sum())
        if tree.is_nominal(child.id):
            return child.id, child.probability, pre, 0.0, 0.0, 0.0
        val, shed, dmg = subtree_value(net, tree, child.id, plan.state(child.onset - 1), params)
        return child.id, child.probability, pre, val, shed, dmg

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, kids))
    else:
        rows = [one(k) for k in kids]
    nominal = sum(p * pre for _, p, pre, _, _, _ in rows)
    disruptive = sum(p * sh for _, p, _, _, sh, _ in rows)
    damage = sum(p * dm for _, p, _, _, _, dm in rows)
    total = sum(p * (pre + val) for _, p, pre, val, _, _ in rows)
    return EvaluationBreakdown(nominal, disruptive, damage, total, len(rows), tuple(rows))


# -- fairness ----------------------------------------------------------------------

@dataclass(frozen=True)
class FairnessMetrics:
    max_gap: float               # max over load pairs of the cumulative shed difference
    total_shed_fraction: float   # demand-weighted shed over the horizon
    per_load: dict               # load id -> average shed fraction over the horizon


def fairness_metrics(plan, net: PowerNetwork) -> FairnessMetrics:
    s = np.asarray(plan.s, float)
    cum = s.sum(axis=1)
    D = np.array([ld.demand_by_period for ld in net.loads], float)
    total = float((D * s).sum() / D.sum()) if D.sum() > 0 else 0.0
    T = s.shape[1]
    per = {ld.id: float(cum[d] / T) for d, ld in enumerate(net.loads)}
    gap = float(cum.max() - cum.min()) if len(cum) else 0.0
    return FairnessMetrics(gap, total, per)


# -- restoration comparison -----------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    restoration: bool
    beta: float
    nominal_shed: float
    disruptive_shed: float
    damage: float
    total: float
    objective: float  # optimal (or best upper bound) training objective


def solve_plan(net: PowerNetwork, tree: ScenarioTree, options: FormulationOptions,
               method: str = "decomposition", config=None):
    """(plan, objective) from the decomposition engine or the extensive form."""
    if method == "extensive":
        res = extensive_form_solve(net, tree, options)
        return NominalPlan.from_solution(res.solutions[tree.root], options), res.value
    from .engine import EngineConfig, run
    rep = run(net, tree, options, config or EngineConfig())
    return NominalPlan.from_solution(rep.incumbent[tree.root], options), rep.ub


def compare_restoration(net: PowerNetwork, tree: ScenarioTree, betas, testing_set=None,
                        method: str = "decomposition", config=None,
                        restoration_modes=(True, False), params: SolverParams = EXACT,
                        threads: int = 1) -> list[ComparisonRow]:
    """Plans with and without restoration for each fairness level, evaluated
    on ``testing_set`` (defaults to the training tree)."""
    from .errors import ConfigError
    betas = list(betas)
    if not betas:
        raise ConfigError("beta list is empty")
    test = tree if testing_set is None else testing_set
    rows = []
    for restore in restoration_modes:
        for beta in betas:
            opts = FormulationOptions(beta=beta, restoration=restore)
            plan, obj = solve_plan(net, tree, opts, method, config)
            b = evaluate_out_of_sample(plan, net, test, params, threads)
            rows.append(ComparisonRow(restore, beta, b.nominal_shed_cost, b.disruptive_shed_cost,
                                      b.damage_cost, b.total, obj))
    return rows


# -- report files ----------------------------------------------------------------

def _fmt_beta(beta) -> str:
    return "inf" if math.isinf(beta) else repr(float(beta))


def emit_reports(out_dir, report=None, breakdowns: dict | None = None,
                 fairness: dict | None = None, comparison: list | None = None,
                 extra: dict | None = None) -> dict:
    """Write convergence/fairness/comparison CSVs and ``run_summary.json``.

    ``fairness`` maps beta to :class:`FairnessMetrics`; ``breakdowns`` maps a
    label to :class:`EvaluationBreakdown`. An existing ``run_summary.json`` is
    updated rather than replaced. Returns the written paths.
    """
    out = Path(out_dir)
    written = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        summary = _read_summary(out / "run_summary.json")
        summary.update(extra or {})
        if report is not None:
            p = out / "convergence.csv"
            report.write_trace_csv(p)
            written["convergence"] = p
            summary["solve"] = report.summary()
        if fairness:
            p = out / "fairness.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["beta", "load_id", "cum_shed_frac"])
                for beta, fm in fairness.items():
                    for lid, frac in fm.per_load.items():
                        w.writerow([_fmt_beta(beta), lid, repr(frac)])
            written["fairness"] = p
            summary["fairness"] = {_fmt_beta(b): {"max_gap": fm.max_gap,
                                                  "total_shed_fraction": fm.total_shed_fraction}
                                   for b, fm in fairness.items()}
        if comparison:
            p = out / "comparison.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["restoration", "beta", "nominal_shed", "disruptive_shed", "damage",
                            "total"])
                for r in comparison:
                    w.writerow([int(r.restoration), _fmt_beta(r.beta), repr(r.nominal_shed),
                                repr(r.disruptive_shed), repr(r.damage), repr(r.total)])
            written["comparison"] = p
            summary["comparison"] = [{**asdict(r), "beta": _fmt_beta(r.beta)} for r in comparison]
        if breakdowns:
            p = out / "breakdown.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["label", "nominal_shed", "disruptive_shed", "damage", "total"])
                for label, b in breakdowns.items():
                    w.writerow([label, repr(b.nominal_shed_cost), repr(b.disruptive_shed_cost),
                                repr(b.damage_cost), repr(b.total)])
            written["breakdown"] = p
            summary["breakdowns"] = {k: {kk: vv for kk, vv in b.to_dict().items()
                                         if kk != "per_scenario"}
                                     for k, b in breakdowns.items()}
        p = out / "run_summary.json"
        p.write_text(json.dumps(_finite(summary), indent=1, sort_keys=True, default=_json_default))
        written["summary"] = p
    except OSError as exc:
        raise IoError(f"cannot write reports to {out}: {exc}") from exc
    return written


def _read_summary(path: Path) -> dict:
    try:
        data = json.loads(path.read_text())
    except (FileNotFoundError, json.JSONDecodeError):
        return {}
    return data if isinstance(data, dict) else {}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _finite(o):
    """Replace non-finite floats by strings so the summary is strict JSON."""
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    return o
