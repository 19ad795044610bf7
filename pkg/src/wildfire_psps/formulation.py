"""Stage optimization models for the de-energization problem.

Every stage shares one operations block per period: DC flow with switching
(big-M on the angle equation), thermal and generation limits, nodal balance
and component logic (a bus shutoff forces its generators and lines off and
its loads fully shed). The root stage adds either restoration logic or
monotone shutoff plus pairwise fairness rows; a disruption stage adds the
nonanticipativity copy of the inherited state, monotone shutoff and fire
damage. Each non-nominal child gets an epigraph variable ``V`` bounded below
by cuts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, InconsistentTree, InvalidAnchor
from .network import PowerNetwork
from .scenarios import ScenarioTree
from .solver import INF, LinearModel

PAIRWISE_FAIRNESS_MAX = 60


@dataclass(frozen=True)
class FormulationOptions:
    beta: float = math.inf
    restoration: bool = True
    fairness_enabled: bool = True

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")


@dataclass
class Block:
    """Variable handles of one operations block covering periods t0..T."""
    t0: int
    T: int
    z: np.ndarray   # (components, periods)
    s: np.ndarray   # (loads, periods)
    pg: np.ndarray  # (generators, periods)
    pl: np.ndarray  # (lines, periods)
    th: np.ndarray  # (buses, periods)

    def col(self, t: int) -> int:
        return t - self.t0

    @property
    def periods(self) -> range:
        return range(self.t0, self.T + 1)


@dataclass
class StageModel:
    lp: LinearModel
    node_id: str
    block: Block
    V: dict = field(default_factory=dict)          # child id -> column
    child_prob: dict = field(default_factory=dict)  # child id -> p (all children)
    child_onset: dict = field(default_factory=dict)
    r: np.ndarray | None = None
    nu: np.ndarray | None = None
    copy_vars: np.ndarray | None = None
    copy_rows: np.ndarray | None = None
    anchor: np.ndarray | None = None
    relaxed: bool = False
    n_cuts: int = 0

    @property
    def is_root(self) -> bool:
        return self.copy_vars is None

    def state_vars(self, child_id: str) -> np.ndarray:
        """Columns of z at the period preceding the child's onset."""
        return self.block.z[:, self.block.col(self.child_onset[child_id] - 1)]

    def set_anchor(self, zhat) -> None:
        zhat = check_anchor(zhat, len(self.copy_vars))
        for r, v in zip(self.copy_rows, zhat):
            self.lp.set_row_bounds(int(r), v, v)
        self.anchor = zhat

    def value_terms(self, x) -> float:
        """Sum of p * V over the non-nominal children at solution ``x``."""
        return sum(self.child_prob[c] * x[j] for c, j in self.V.items())


def check_anchor(zhat, n) -> np.ndarray:
    z = np.asarray(zhat, float).ravel()
    if z.shape != (n,):
        raise InvalidAnchor(f"anchor has {z.size} entries, expected {n}")
    if np.any((z != 0) & (z != 1)):
        raise InvalidAnchor("anchor must be binary")
    return z


def _children(tree: ScenarioTree, nid: str):
    """(id, probability, onset) of children; a childless disruption node has an
    implicit nominal continuation."""
    kids = tree.children(nid)
    if not kids:
        return [(None, 1.0, tree.horizon_T + 1)]
    return [(k.id, k.probability, k.onset) for k in kids]


def _survival(kids, t) -> float:
    """Probability that the next disruption happens after period ``t``."""
    return sum(p for _, p, onset in kids if onset > t)


def add_operations_block(lp: LinearModel, net: PowerNetwork, t0: int, T: int,
                         tag: str) -> Block:
    nC, nB, nG, nL, nD = (net.n_components, len(net.buses), len(net.generators),
                          len(net.lines), len(net.loads))
    nt = T - t0 + 1
    bidx = net.bus_index()
    comps = net.components
    z = np.empty((nC, nt), int)
    s = np.empty((nD, nt), int)
    pg = np.empty((nG, nt), int)
    pl = np.empty((nL, nt), int)
    th = np.empty((nB, nt), int)
    ref = bidx[net.reference_bus.id]
    for k, t in enumerate(range(t0, T + 1)):
        for c in range(nC):
            z[c, k] = lp.add_var(f"z[{tag},{comps[c]},{t}]", 0, 1, integer=True)
        for d, load in enumerate(net.loads):
            s[d, k] = lp.add_var(f"s[{tag},{load.id},{t}]", 0, 1)
        for g, gen in enumerate(net.generators):
            pg[g, k] = lp.add_var(f"pg[{tag},{gen.id},{t}]", 0, gen.p_max)
        for l, line in enumerate(net.lines):
            pl[l, k] = lp.add_var(f"pl[{tag},{line.id},{t}]", -line.thermal_limit,
                                  line.thermal_limit)
        for b, bus in enumerate(net.buses):
            lim = 0.0 if b == ref else math.pi
            th[b, k] = lp.add_var(f"th[{tag},{bus.id},{t}]", -lim, lim)

    zb = lambda b, k: z[b, k]
    zg = lambda g, k: z[nB + g, k]
    zl = lambda l, k: z[nB + nG + l, k]
    for k, t in enumerate(range(t0, T + 1)):
        for l, line in enumerate(net.lines):
            i, j = bidx[line.from_bus], bidx[line.to_bus]
            B = net.base_mva * line.susceptance_mag
            M = B * net.big_m_angle
            cols = [pl[l, k], th[j, k], th[i, k], zl(l, k)]
            lp.add_row(cols, [1.0, -B, B, M], hi=M, name=f"flow_up[{tag},{line.id},{t}]")
            lp.add_row(cols, [1.0, -B, B, -M], lo=-M, name=f"flow_lo[{tag},{line.id},{t}]")
            W = line.thermal_limit
            lp.add_row([pl[l, k], zl(l, k)], [1.0, -W], hi=0.0, name=f"therm_up[{tag},{line.id},{t}]")
            lp.add_row([pl[l, k], zl(l, k)], [1.0, W], lo=0.0, name=f"therm_lo[{tag},{line.id},{t}]")
            lp.add_row([zb(i, k), zl(l, k)], [1.0, -1.0], lo=0.0, name=f"bus_line[{tag},{line.id},{i},{t}]")
            lp.add_row([zb(j, k), zl(l, k)], [1.0, -1.0], lo=0.0, name=f"bus_line[{tag},{line.id},{j},{t}]")
        for g, gen in enumerate(net.generators):
            lp.add_row([pg[g, k], zg(g, k)], [1.0, -gen.p_max], hi=0.0, name=f"gen_up[{tag},{gen.id},{t}]")
            lp.add_row([pg[g, k], zg(g, k)], [1.0, -gen.p_min], lo=0.0, name=f"gen_lo[{tag},{gen.id},{t}]")
            lp.add_row([zb(bidx[gen.bus], k), zg(g, k)], [1.0, -1.0], lo=0.0,
                       name=f"bus_gen[{tag},{gen.id},{t}]")
        for d, load in enumerate(net.loads):
            lp.add_row([s[d, k], zb(bidx[load.bus], k)], [1.0, 1.0], lo=1.0,
                       name=f"bus_load[{tag},{load.id},{t}]")
        # nodal balance: generation + line inflow = served demand
        cols = {b: [] for b in range(nB)}
        coefs = {b: [] for b in range(nB)}
        rhs = np.zeros(nB)
        for g, gen in enumerate(net.generators):
            cols[bidx[gen.bus]].append(pg[g, k]); coefs[bidx[gen.bus]].append(1.0)
        for l, line in enumerate(net.lines):
            cols[bidx[line.from_bus]].append(pl[l, k]); coefs[bidx[line.from_bus]].append(1.0)
            cols[bidx[line.to_bus]].append(pl[l, k]); coefs[bidx[line.to_bus]].append(-1.0)
        for d, load in enumerate(net.loads):
            D = load.demand_by_period[t - 1]
            cols[bidx[load.bus]].append(s[d, k]); coefs[bidx[load.bus]].append(D)
            rhs[bidx[load.bus]] += D
        for b in range(nB):
            lp.add_row(cols[b], coefs[b], lo=rhs[b], hi=rhs[b],
                       name=f"balance[{tag},{net.buses[b].id},{t}]")
    return Block(t0, T, z, s, pg, pl, th)


def _set_shed_objective(lp, net, block, kids, weight):
    w = net.priorities()
    for t in block.periods:
        surv = _survival(kids, t)
        if surv <= 0:
            continue
        for d in range(len(net.loads)):
            lp.obj[block.s[d, block.col(t)]] += weight * w[d] * surv


def _add_value_vars(model: StageModel, kids, weight=1.0):
    for cid, p, onset in kids:
        model.child_prob[cid] = p
        model.child_onset[cid] = onset
        if onset <= model.block.T:
            model.V[cid] = model.lp.add_var(f"V[{cid}]", 0.0, INF, obj=weight * p)


def _check_tree_horizon(net, tree):
    if tree.horizon_T != net.horizon_T:
        raise InconsistentTree(f"tree horizon {tree.horizon_T} != network {net.horizon_T}")
    for n in tree.nodes.values():
        if n.onset > tree.horizon_T + 1:
            raise InconsistentTree(f"{n.id!r}: onset {n.onset} > T+1")


def _add_root_logic(lp, net, block, options, tag="root"):
    """Restoration (or monotone shutoff) and fairness rows for the root stage."""
    nC = net.n_components
    comps = net.components
    T = block.T
    r = None
    if options.restoration:
        r = np.empty((nC, T), int)
        for t in range(1, T + 1):
            for c in range(nC):
                r[c, t - 1] = lp.add_var(f"r[{tag},{comps[c]},{t}]", 0, 1, integer=True)
        for t in range(2, T + 1):
            for c in range(nC):
                lp.add_row([r[c, t - 2], r[c, t - 1]], [1.0, -1.0], lo=0.0,
                           name=f"restore_once[{tag},{comps[c]},{t}]")
                lp.add_row([r[c, t - 2], r[c, t - 1], block.z[c, t - 1], block.z[c, t - 2]],
                           [1.0, -1.0, -1.0, 1.0], lo=0.0,
                           name=f"restore_logic[{tag},{comps[c]},{t}]")
    else:
        for t in range(2, T + 1):
            for c in range(nC):
                lp.add_row([block.z[c, t - 2], block.z[c, t - 1]], [1.0, -1.0], lo=0.0,
                           name=f"stay_off[{tag},{comps[c]},{t}]")
    nD = len(net.loads)
    if options.fairness_enabled and math.isfinite(options.beta) and nD > 1:
        cap = options.beta * T
        if nD <= PAIRWISE_FAIRNESS_MAX:
            for d in range(nD):
                for e in range(nD):
                    if d != e:
                        lp.add_row(list(block.s[d]) + list(block.s[e]),
                                   [1.0] * T + [-1.0] * T, hi=cap,
                                   name=f"fair[{tag},{net.loads[d].id},{net.loads[e].id}]")
        else:
            hi_ = lp.add_var(f"fair_max[{tag}]", 0, T)
            lo_ = lp.add_var(f"fair_min[{tag}]", 0, T)
            for d in range(nD):
                lp.add_row([hi_] + list(block.s[d]), [1.0] + [-1.0] * T, lo=0.0,
                           name=f"fair_hi[{tag},{net.loads[d].id}]")
                lp.add_row([lo_] + list(block.s[d]), [1.0] + [-1.0] * T, hi=0.0,
                           name=f"fair_lo[{tag},{net.loads[d].id}]")
            lp.add_row([hi_, lo_], [1.0, -1.0], hi=cap, name=f"fair_span[{tag}]")
    return r


def build_root(net: PowerNetwork, tree: ScenarioTree, options: FormulationOptions,
               cut_pool=None) -> StageModel:
    _check_tree_horizon(net, tree)
    lp = LinearModel("root")
    block = add_operations_block(lp, net, 1, net.horizon_T, "root")
    r = _add_root_logic(lp, net, block, options)
    kids = _children(tree, tree.root)
    _set_shed_objective(lp, net, block, kids, 1.0)
    model = StageModel(lp, tree.root, block, r=r)
    _add_value_vars(model, kids)
    if cut_pool is not None:
        for cid in model.V:
            for cut in cut_pool.cuts_for(cid):
                attach_cut(model, cut)
    return model


def _add_disruption_logic(lp, net, tree, nid, block, tag, weight):
    """Copy variables, monotone shutoff and damage rows of a disruption stage;
    returns (copy_vars, nu)."""
    node = tree.node(nid)
    nC = net.n_components
    comps = net.components
    cidx = net.component_index()
    copy_vars = np.array([lp.add_var(f"zc[{tag},{comps[c]}]", 0, 1, integer=True)
                          for c in range(nC)])
    exo = set(node.exogenous())
    cost = net.damage_costs()
    nu = np.array([lp.add_var(f"nu[{tag},{comps[c]}]", 1 if comps[c] in exo else 0, 1,
                              integer=True, obj=weight * cost[c]) for c in range(nC)])
    for c in range(nC):
        prev = copy_vars[c]
        for t in block.periods:
            cur = block.z[c, block.col(t)]
            lp.add_row([cur, prev], [1.0, -1.0], hi=0.0, name=f"stay_off[{tag},{comps[c]},{t}]")
            lp.add_row([cur, nu[c]], [1.0, 1.0], hi=1.0, name=f"damaged_off[{tag},{comps[c]},{t}]")
            prev = cur
    for c in node.faults():
        for k in node.spread_sets.get(c, (c,)):
            lp.add_row([nu[cidx[k]], copy_vars[cidx[c]]], [1.0, -1.0], lo=0.0,
                       name=f"ignite[{tag},{c},{k}]")
    return copy_vars, nu


def build_node(net: PowerNetwork, tree: ScenarioTree, nid: str, cut_pool=None,
               anchor=None) -> StageModel:
    """Augmented disruption-stage model of node ``nid`` with copy rows fixed at
    ``anchor`` (defaults to all ones)."""
    _check_tree_horizon(net, tree)
    if tree.is_nominal(nid) or nid == tree.root:
        raise ValueError(f"{nid!r} is not a disruption node")
    node = tree.node(nid)
    lp = LinearModel(nid)
    block = add_operations_block(lp, net, node.onset, net.horizon_T, nid)
    copy_vars, nu = _add_disruption_logic(lp, net, tree, nid, block, nid, 1.0)
    zhat = np.ones(net.n_components) if anchor is None else check_anchor(anchor, net.n_components)
    copy_rows = np.array([lp.add_row([v], [1.0], lo=zhat[c], hi=zhat[c],
                                     name=f"nonanticipativity[{nid},{net.components[c]}]")
                          for c, v in enumerate(copy_vars)])
    kids = _children(tree, nid)
    _set_shed_objective(lp, net, block, kids, 1.0)
    model = StageModel(lp, nid, block, nu=nu, copy_vars=copy_vars, copy_rows=copy_rows,
                       anchor=zhat)
    _add_value_vars(model, kids)
    if cut_pool is not None:
        for cid in model.V:
            for cut in cut_pool.cuts_for(cid):
                attach_cut(model, cut)
    return model


def relax_binaries(model: StageModel) -> StageModel:
    if model.relaxed:
        return model
    lp = model.lp.copy()
    lp.integer = [False] * lp.n_cols
    return replace(model, lp=lp, relaxed=True, V=dict(model.V),
                   child_prob=dict(model.child_prob), child_onset=dict(model.child_onset))


def attach_cut(model: StageModel, cut) -> int:
    """Add ``V[owner] >= slope @ (z_state - anchor) + intercept``."""
    if cut.owner not in model.V:
        raise ValueError(f"cut owner {cut.owner!r} is not a child of {model.node_id!r}")
    zs = model.state_vars(cut.owner)
    lam = np.asarray(cut.slope, float)
    if lam.shape != zs.shape or np.shape(cut.anchor) != zs.shape:
        raise DimensionMismatch(f"cut dimension {lam.shape} != {zs.shape}")
    rhs = cut.intercept - float(lam @ np.asarray(cut.anchor, float))
    model.n_cuts += 1
    return model.lp.add_row([model.V[cut.owner]] + list(zs), [1.0] + list(-lam), lo=rhs,
                            name=f"cut[{cut.owner},{model.n_cuts}]")


# -- extensive form -----------------------------------------------------------

@dataclass
class ExtensiveModel:
    lp: LinearModel
    blocks: dict           # node id -> Block
    r: np.ndarray | None
    nu: dict               # node id -> damage columns
    weights: dict          # node id -> path probability relative to the top node
    top: str
    copy_rows: np.ndarray | None = None

    def set_anchor(self, zhat):
        for r, v in zip(self.copy_rows, zhat):
            self.lp.set_row_bounds(int(r), v, v)


def build_extensive(net: PowerNetwork, tree: ScenarioTree, options: FormulationOptions,
                    top: str | None = None, anchor=None) -> ExtensiveModel:
    """Monolithic model over the subtree rooted at ``top`` (default: the root).

    For a disruption node, the inherited state is fixed at ``anchor`` through
    copy rows; descendants are linked to their parent's shutoff variables.
    """
    _check_tree_horizon(net, tree)
    top = tree.root if top is None else top
    lp = LinearModel(f"extensive[{top}]")
    blocks, nus, weights = {}, {}, {}
    r = None
    copy_rows = None
    if top == tree.root:
        block = add_operations_block(lp, net, 1, net.horizon_T, top)
        r = _add_root_logic(lp, net, block, options)
        kids = _children(tree, top)
        _set_shed_objective(lp, net, block, kids, 1.0)
        blocks[top] = block
        weights[top] = 1.0
    else:
        node = tree.node(top)
        block = add_operations_block(lp, net, node.onset, net.horizon_T, top)
        copy_vars, nu = _add_disruption_logic(lp, net, tree, top, block, top, 1.0)
        zhat = np.ones(net.n_components) if anchor is None else check_anchor(anchor, net.n_components)
        copy_rows = np.array([lp.add_row([v], [1.0], lo=zhat[c], hi=zhat[c],
                                         name=f"nonanticipativity[{top},{c}]")
                              for c, v in enumerate(copy_vars)])
        _set_shed_objective(lp, net, block, _children(tree, top), 1.0)
        blocks[top], nus[top], weights[top] = block, nu, 1.0

    def descend(pid):
        for ch in tree.children(pid):
            if tree.is_nominal(ch.id):
                continue
            w = weights[pid] * ch.probability
            blk = add_operations_block(lp, net, ch.onset, net.horizon_T, ch.id)
            copy_vars, nu = _add_disruption_logic(lp, net, tree, ch.id, blk, ch.id, w)
            parent = blocks[pid]
            state = parent.z[:, parent.col(ch.onset - 1)]
            for c in range(net.n_components):
                lp.add_row([copy_vars[c], state[c]], [1.0, -1.0], lo=0.0, hi=0.0,
                           name=f"link[{ch.id},{c}]")
            _set_shed_objective(lp, net, blk, _children(tree, ch.id), w)
            blocks[ch.id], nus[ch.id], weights[ch.id] = blk, nu, w
            descend(ch.id)

    descend(top)
    return ExtensiveModel(lp, blocks, r, nus, weights, top, copy_rows)


# -- solutions ------------------------------------------------------------------

@dataclass
class StageSolution:
    node_id: str
    t0: int
    z: np.ndarray
    s: np.ndarray
    pg: np.ndarray
    pl: np.ndarray
    theta: np.ndarray
    r: np.ndarray | None = None
    nu: np.ndarray | None = None
    objective: float = float("nan")
    shed_cost: float = 0.0    # survival-weighted shed cost inside the stage
    damage_cost: float = 0.0

    @property
    def stage_cost(self) -> float:
        return self.shed_cost + self.damage_cost

    def state(self, t: int) -> np.ndarray:
        """Shutoff state z at period ``t`` (rounded to 0/1)."""
        return self.z[:, t - self.t0]

    def to_dict(self) -> dict:
        d = {"node_id": self.node_id, "t0": self.t0, "objective": self.objective,
             "shed_cost": self.shed_cost, "damage_cost": self.damage_cost}
        for k in ("z", "s", "pg", "pl", "theta", "r", "nu"):
            v = getattr(self, k)
            d[k] = None if v is None else np.asarray(v).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StageSolution":
        arr = lambda v: None if v is None else np.asarray(v, float)
        return cls(d["node_id"], int(d["t0"]), arr(d["z"]), arr(d["s"]), arr(d["pg"]),
                   arr(d["pl"]), arr(d["theta"]), arr(d.get("r")), arr(d.get("nu")),
                   float(d.get("objective", float("nan"))), float(d.get("shed_cost", 0.0)),
                   float(d.get("damage_cost", 0.0)))


def stage_costs(net: PowerNetwork, tree: ScenarioTree, nid: str, t0: int, s, nu):
    """(shed, damage) immediate cost of a stage from its shed fractions and damage."""
    kids = _children(tree, nid)
    w = np.asarray(net.priorities())
    shed = 0.0
    for k, t in enumerate(range(t0, net.horizon_T + 1)):
        shed += _survival(kids, t) * float(w @ s[:, k])
    damage = 0.0 if nu is None else float(np.asarray(net.damage_costs()) @ nu)
    return shed, damage


def extract_solution(net: PowerNetwork, tree: ScenarioTree, nid: str, block: Block, x,
                     r=None, nu=None, objective=float("nan")) -> StageSolution:
    x = np.asarray(x, float)
    z = np.round(x[block.z])
    s = np.clip(x[block.s], 0.0, 1.0)
    nu_v = None if nu is None else np.round(x[nu])
    shed, dmg = stage_costs(net, tree, nid, block.t0, s, nu_v)
    return StageSolution(nid, block.t0, z, s, x[block.pg], x[block.pl], x[block.th],
                         None if r is None else np.round(x[r]), nu_v, objective, shed, dmg)
