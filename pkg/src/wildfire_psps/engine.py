"""Cutting-plane decomposition over the scenario tree.

Each iteration runs a forward pass over every tree node (root first, then
depth-first in node-id order) to get anchors and a policy cost, followed by a
backward pass (deepest nodes first) that adds one cut per disruption node to
its parent's model.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .cuts import DOMAINS, FAMILIES, CutRecord, DualSolverParams, append_cut_log, generate_cut
from .formulation import (FormulationOptions, StageModel, StageSolution, attach_cut, build_node,
                          build_root, extract_solution)
from .network import PowerNetwork
from .scenarios import ScenarioTree
from .solver import SolverParams, require_optimal, solve_mip

REASONS = ("Converged", "GapStall", "IterationLimit", "TimeLimit")
LOOSE_FAMILIES = ("BC", "SBC")


class CutPool:
    """Cuts per owner node, deduplicated by their affine function."""

    def __init__(self):
        self.cuts: dict[str, list[CutRecord]] = {}
        self._keys: set = set()

    def add(self, cut: CutRecord) -> bool:
        k = cut.key()
        if k in self._keys:
            return False
        self._keys.add(k)
        self.cuts.setdefault(cut.owner, []).append(cut)
        return True

    def cuts_for(self, owner: str) -> list[CutRecord]:
        return self.cuts.get(owner, [])

    def __len__(self) -> int:
        return sum(len(v) for v in self.cuts.values())

    def all(self) -> list[CutRecord]:
        return [c for k in sorted(self.cuts) for c in self.cuts[k]]


@dataclass(frozen=True)
class EngineConfig:
    epsilon: float = 0.01
    max_iterations: int = 200
    max_wall_time: float = math.inf
    cut_family: str = "LC"
    z_domain: str = "binary"
    delta: float = 1e-4
    stall_iterations: int = 5
    stall_tol: float = 1e-9
    gap_floor: float = 1e-6  # relative gap treated as closed when epsilon is 0
    forward_gap: float | None = None  # default min(1e-4, max(epsilon/10, 1e-9))
    backward_gap: float = 1e-6
    dual: DualSolverParams = field(default_factory=DualSolverParams)
    threads: int = 1
    cut_log: str | None = None

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")
        if self.cut_family not in FAMILIES:
            raise ValueError(f"cut_family must be one of {FAMILIES}")
        if self.z_domain not in DOMAINS:
            raise ValueError(f"z_domain must be one of {DOMAINS}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def forward_params(self) -> SolverParams:
        gap = self.forward_gap
        if gap is None:
            gap = min(1e-4, max(self.epsilon / 10.0, 1e-9))
        return SolverParams(mip_gap=gap, threads=self.threads)

    def dual_params(self) -> DualSolverParams:
        d = self.dual
        return replace(d, solver=SolverParams(mip_gap=self.backward_gap, threads=self.threads))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dual"] = {k: v for k, v in d["dual"].items() if k != "solver"}
        return d


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    lb: float
    ub: float
    gap: float
    cuts_added: int
    seconds: float


@dataclass
class SolveReport:
    trace: list
    incumbent: dict  # node id -> StageSolution
    lb: float
    ub: float
    gap: float
    reason: str
    pool: CutPool
    config: EngineConfig

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def root_solution(self) -> StageSolution:
        return self.incumbent[next(iter(self.incumbent))]

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "lb", "ub", "gap", "cuts_added", "seconds"])
            for r in self.trace:
                w.writerow([r.iteration, repr(r.lb), repr(r.ub), repr(r.gap), r.cuts_added,
                            f"{r.seconds:.6f}"])

    def summary(self) -> dict:
        return {"lb": self.lb, "ub": self.ub, "gap": self.gap, "reason": self.reason,
                "iterations": self.iterations, "cuts": len(self.pool),
                "config": self.config.to_dict()}


def relative_gap(lb: float, ub: float) -> float:
    if not math.isfinite(ub):
        return math.inf
    return max(0.0, ub - lb) / max(1.0, abs(ub))


def lower_bound_is_monotone(report_or_trace, tol: float = 1e-9) -> bool:
    trace = getattr(report_or_trace, "trace", report_or_trace)
    lbs = [getattr(r, "lb", r) for r in trace]
    return all(b >= a - tol * max(1.0, abs(a)) for a, b in zip(lbs, lbs[1:]))


class Decomposition:
    """Stage models for every tree node, kept across iterations."""

    def __init__(self, net: PowerNetwork, tree: ScenarioTree, options: FormulationOptions,
                 config: EngineConfig):
        self.net, self.tree, self.options, self.config = net, tree, options, config
        self.pool = CutPool()
        self.root = build_root(net, tree, options)
        self.order = tree.disruption_nodes()  # pre-order, siblings in id order
        self.models: dict[str, StageModel] = {tree.root: self.root}
        for nid in self.order:
            self.models[nid] = build_node(net, tree, nid)
        self.iteration = 0

    def parent_anchor(self, nid: str, sols: dict) -> np.ndarray:
        node = self.tree.node(nid)
        return sols[node.parent].state(node.onset - 1)

    def forward_pass(self):
        """Solve every node at its parent's anchor; returns (solutions, UB
        candidate, root lower bound)."""
        params = self.config.forward_params()
        sols: dict[str, StageSolution] = {}
        out = require_optimal(solve_mip(self.root.lp, params), "root stage")
        root_sol = extract_solution(self.net, self.tree, self.tree.root, self.root.block, out.x,
                                    r=self.root.r, objective=out.objective)
        sols[self.tree.root] = root_sol
        ub = root_sol.stage_cost
        for nid in self.order:
            m = self.models[nid]
            m.set_anchor(self.parent_anchor(nid, sols))
            o = require_optimal(solve_mip(m.lp, params), f"node {nid}")
            s = extract_solution(self.net, self.tree, nid, m.block, o.x, nu=m.nu,
                                 objective=o.objective)
            sols[nid] = s
            ub += self.tree.path_probability(nid) * s.stage_cost
        return sols, ub, out.bound

    def backward_pass(self, sols: dict, deadline: float = math.inf) -> int:
        """Add one cut per disruption node, deepest first; returns the number
        of new (non-duplicate) cuts. Stops early once ``deadline`` (a
        ``time.perf_counter`` value) has passed."""
        cfg = self.config
        dp = cfg.dual_params()
        added = 0
        for nid in sorted(self.order, key=lambda n: (-self.tree.depth(n), n)):
            if time.perf_counter() >= deadline:
                break
            m = self.models[nid]
            anchor = self.parent_anchor(nid, sols)
            cut = generate_cut(cfg.cut_family, m, anchor, cfg.z_domain, cfg.delta, dp, owner=nid)
            cut = CutRecord(**{**cut.__dict__, "iteration": self.iteration})
            if self.pool.add(cut):
                added += 1
                attach_cut(self.models[self.tree.node(nid).parent], cut)
                if cfg.cut_log:
                    append_cut_log(cfg.cut_log, cut)
        return added


def run(net: PowerNetwork, tree: ScenarioTree, options: FormulationOptions = FormulationOptions(),
        config: EngineConfig = EngineConfig(), callback=None) -> SolveReport:
    """Alternate forward and backward passes until the relative gap closes,
    progress stalls, or a limit is hit."""
    t_start = time.perf_counter()
    dec = Decomposition(net, tree, options, config)
    lb, ub = -math.inf, math.inf
    incumbent: dict = {}
    trace: list[IterationRecord] = []
    stall = 0
    reason = "IterationLimit"
    tol_floor = config.gap_floor
    while True:
        dec.iteration += 1
        sols, ub_cand, root_bound = dec.forward_pass()
        new_lb = max(lb, root_bound)
        improved = new_lb - lb > config.stall_tol * max(1.0, abs(new_lb)) if math.isfinite(lb) else True
        lb = new_lb
        if ub_cand < ub:
            ub, incumbent = ub_cand, sols
        gap = relative_gap(lb, ub)
        stall = 0 if improved else stall + 1
        done = gap <= max(config.epsilon, tol_floor)
        added = 0
        if not done:
            added = dec.backward_pass(sols, t_start + config.max_wall_time)
        trace.append(IterationRecord(dec.iteration, lb, ub, gap, added,
                                     time.perf_counter() - t_start))
        if callback is not None:
            callback(trace[-1])
        if done:
            reason = "Converged"
            break
        # checked first: a backward pass cut short by the clock may add nothing
        if time.perf_counter() - t_start >= config.max_wall_time:
            reason = "TimeLimit"
            break
        # a flat bound is only a stopping signal for families that are not
        # tight at the anchor; tight families keep going while cuts are new
        stalled = config.cut_family in LOOSE_FAMILIES and stall >= config.stall_iterations
        if added == 0 or stalled:
            reason = "GapStall"
            break
        if dec.iteration >= config.max_iterations:
            reason = "IterationLimit"
            break
    return SolveReport(trace, incumbent, lb, ub, relative_gap(lb, ub), reason, dec.pool, config)
