"""Wildfire disruption sampling and scenario-tree assembly.

Sample paths come from a stochastic lattice fire model: every period each
component may fault and each cell may ignite; fires spread over a Moore
neighbourhood with a wind-biased probability for the remaining periods of
the horizon. A path is a chronologically ordered list of disruption events,
at most one per period. Paths are folded into a tree by exact deduplication
of events level by level, each path carrying weight 1/n.
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput, InconsistentTree, InvalidParams, ParseError, ValidationError
from .network import PowerNetwork

ROOT = "root"
PROB_TOL = 1e-9

_MOORE = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]


@dataclass(frozen=True)
class DisruptionEvent:
    onset: int
    faults: frozenset = frozenset()
    exogenous: frozenset = frozenset()
    spread: tuple = ()  # sorted ((component, sorted tuple of affected components), ...)

    @property
    def spread_sets(self) -> dict:
        return {c: tuple(s) for c, s in self.spread}

    def key(self):
        return (self.onset, tuple(sorted(self.faults)), tuple(sorted(self.exogenous)),
                self.spread)

    @classmethod
    def make(cls, onset, faults=(), exogenous=(), spread=None):
        spread = spread or {}
        faults = frozenset(faults)
        sp = {c: tuple(sorted(set(spread.get(c, ())) | {c})) for c in faults}
        return cls(int(onset), faults, frozenset(exogenous), tuple(sorted(sp.items())))


SamplePath = list  # list[DisruptionEvent]


@dataclass
class CaParams:
    grid_cells: tuple = (10, 10)
    cell_km: float = 5.0
    ignition_rate: float = 0.002
    spread_prob: float = 0.3
    wind_direction: float = 0.0  # degrees, 0 = +x
    wind_bias: float = 1.0  # 1 means isotropic spread
    fault_rate: float = 0.002
    component_cells: dict = field(default_factory=dict)
    component_risk: dict = field(default_factory=dict)  # per-component fault-rate multiplier

    def validate(self, network: PowerNetwork | None = None) -> None:
        for name in ("ignition_rate", "spread_prob", "fault_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParams(f"{name}={v} outside [0, 1]")
        nx, ny = self.grid_cells
        if nx < 1 or ny < 1:
            raise InvalidParams("grid must have at least one cell")
        if self.wind_bias <= 0:
            raise InvalidParams("wind_bias must be > 0")
        for c, (ix, iy) in self.component_cells.items():
            if not (0 <= ix < nx and 0 <= iy < ny):
                raise InvalidParams(f"component {c!r} mapped outside the grid")
        if network is not None:
            missing = set(network.components) - set(self.component_cells)
            if missing:
                raise InvalidParams(f"components without a cell: {sorted(missing)[:5]}")

    def to_dict(self) -> dict:
        return {"grid_cells": list(self.grid_cells), "cell_km": self.cell_km,
                "ignition_rate": self.ignition_rate, "spread_prob": self.spread_prob,
                "wind_direction": self.wind_direction, "wind_bias": self.wind_bias,
                "fault_rate": self.fault_rate,
                "component_cells": {c: list(v) for c, v in self.component_cells.items()},
                "component_risk": dict(self.component_risk)}

    @classmethod
    def from_dict(cls, d: dict) -> "CaParams":
        d = dict(d)
        if "grid_cells" in d:
            d["grid_cells"] = tuple(d["grid_cells"])
        if "component_cells" in d:
            d["component_cells"] = {c: tuple(v) for c, v in d["component_cells"].items()}
        return cls(**d)


def layout_components(network: PowerNetwork, grid_cells=(10, 10), seed=0) -> dict:
    """Deterministic default placement: buses scattered on the grid, generators
    on their bus cell, lines on the midpoint cell of their endpoints."""
    nx, ny = grid_cells
    rng = np.random.default_rng(seed)
    cells = {}
    for b in network.buses:
        cells[b.id] = (int(rng.integers(nx)), int(rng.integers(ny)))
    for g in network.generators:
        cells[g.id] = cells[g.bus]
    for l in network.lines:
        (x1, y1), (x2, y2) = cells[l.from_bus], cells[l.to_bus]
        cells[l.id] = ((x1 + x2) // 2, (y1 + y2) // 2)
    return cells


def _direction_probs(params: CaParams) -> list:
    th = math.radians(params.wind_direction)
    wx, wy = math.cos(th), math.sin(th)
    probs = []
    for dx, dy in _MOORE:
        cos = (dx * wx + dy * wy) / math.hypot(dx, dy)
        probs.append(min(1.0, params.spread_prob * params.wind_bias ** cos))
    return probs


def _burn(params: CaParams, origins: np.ndarray, steps: int, rng) -> np.ndarray:
    """Spread fire from a boolean mask of burning cells for ``steps`` periods."""
    burning = origins.copy()
    if steps <= 0 or params.spread_prob == 0.0:
        return burning
    nx, ny = burning.shape
    probs = _direction_probs(params)
    for _ in range(steps):
        new = np.zeros_like(burning)
        for (dx, dy), p in zip(_MOORE, probs):
            if p <= 0.0:
                continue
            shifted = np.zeros_like(burning)
            xs = slice(max(dx, 0), nx + min(dx, 0))
            xd = slice(max(-dx, 0), nx + min(-dx, 0))
            ys = slice(max(dy, 0), ny + min(dy, 0))
            yd = slice(max(-dy, 0), ny + min(-dy, 0))
            shifted[xs, ys] = burning[xd, yd]
            if p >= 1.0:
                new |= shifted
            else:
                new |= shifted & (rng.random(burning.shape) < p)
        grew = (new & ~burning).any()
        burning |= new
        if not grew and all(p in (0.0, 1.0) for p in probs):
            break
    return burning


def _components_in(params: CaParams, mask: np.ndarray, components) -> set:
    return {c for c in components if mask[params.component_cells[c]]}


def spread_set(network: PowerNetwork, params: CaParams, component: str, onset: int,
               rng) -> set:
    """Components reached by a fire started at ``component``'s cell at ``onset``."""
    if component not in params.component_cells:
        raise ValidationError(f"unknown component {component!r}")
    origin = np.zeros(params.grid_cells, bool)
    origin[params.component_cells[component]] = True
    burned = _burn(params, origin, network.horizon_T - onset, rng)
    return _components_in(params, burned, network.components) | {component}


def simulate_paths(network: PowerNetwork, params: CaParams, n: int, seed: int,
                   max_disruptions: int = 2) -> list:
    """Sample ``n`` disruption paths; reproducible for a given ``seed``."""
    if n < 1 or max_disruptions < 1:
        raise InvalidParams("need n >= 1 and max_disruptions >= 1")
    if not params.component_cells:
        params = CaParams(**{**params.__dict__,
                             "component_cells": layout_components(network, params.grid_cells)})
    params.validate(network)
    comps = network.components
    rates = np.array([params.fault_rate * params.component_risk.get(c, 1.0) for c in comps])
    if np.any(rates > 1):
        raise InvalidParams("fault_rate * component_risk exceeds 1")
    streams = np.random.SeedSequence(seed).spawn(n)
    T = network.horizon_T
    paths = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        path = []
        for t in range(2, T + 1):
            if len(path) >= max_disruptions:
                break
            faulted = [comps[k] for k in np.flatnonzero(rng.random(len(comps)) < rates)]
            ign = rng.random(params.grid_cells) < params.ignition_rate
            if not faulted and not ign.any():
                continue
            spread = {c: spread_set(network, params, c, t, rng) for c in faulted}
            exo = set()
            if ign.any():
                exo = _components_in(params, _burn(params, ign, T - t, rng), comps)
            if not faulted and not exo:
                continue  # fire burned no component: not a disruption
            path.append(DisruptionEvent.make(t, faulted, exo, spread))
        paths.append(path)
    return paths


# -- tree -------------------------------------------------------------------

@dataclass
class DisruptionRealization:
    id: str
    parent: str | None
    onset: int
    probability: float
    fault_flags: dict = field(default_factory=dict)
    exogenous_flags: dict = field(default_factory=dict)
    spread_sets: dict = field(default_factory=dict)
    children: list = field(default_factory=list)

    def faults(self) -> list:
        return [c for c, u in self.fault_flags.items() if u]

    def exogenous(self) -> list:
        return [c for c, v in self.exogenous_flags.items() if v]

    def to_dict(self) -> dict:
        return {"id": self.id, "parent": self.parent, "onset": self.onset,
                "probability": self.probability,
                "fault_flags": dict(self.fault_flags),
                "exogenous_flags": dict(self.exogenous_flags),
                "spread_sets": {c: list(s) for c, s in self.spread_sets.items()},
                "children": list(self.children)}


@dataclass
class ScenarioTree:
    horizon_T: int
    nodes: dict
    depth_limit: int = 2
    root: str = ROOT

    def __post_init__(self):
        validate_tree(self)

    def node(self, nid) -> DisruptionRealization:
        return self.nodes[nid]

    def children(self, nid) -> list:
        return [self.nodes[c] for c in sorted(self.nodes[nid].children)]

    def is_nominal(self, nid) -> bool:
        return self.nodes[nid].onset == self.horizon_T + 1

    def disruption_nodes(self) -> list:
        """Non-root, non-nominal node ids in depth-first pre-order."""
        out = []

        def visit(nid):
            for ch in self.children(nid):
                if not self.is_nominal(ch.id):
                    out.append(ch.id)
                    visit(ch.id)

        visit(self.root)
        return out

    def depth(self, nid) -> int:
        d = 0
        while self.nodes[nid].parent is not None:
            nid = self.nodes[nid].parent
            d += 1
        return d

    def path_probability(self, nid) -> float:
        p = 1.0
        while nid != self.root:
            p *= self.nodes[nid].probability
            nid = self.nodes[nid].parent
        return p

    def leaves(self) -> list:
        return [n for n in self.nodes if not self.nodes[n].children]

    def __eq__(self, other):
        return (isinstance(other, ScenarioTree) and self.to_dict() == other.to_dict())

    def to_dict(self) -> dict:
        return {"horizon_T": self.horizon_T, "depth_limit": self.depth_limit,
                "root": self.root,
                "nodes": {k: self.nodes[k].to_dict() for k in sorted(self.nodes)}}

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioTree":
        try:
            nodes = {}
            for k, d in data["nodes"].items():
                nodes[str(k)] = DisruptionRealization(
                    str(d["id"]), d.get("parent"), int(d["onset"]), float(d["probability"]),
                    {c: int(u) for c, u in d.get("fault_flags", {}).items()},
                    {c: int(v) for c, v in d.get("exogenous_flags", {}).items()},
                    {c: tuple(s) for c, s in d.get("spread_sets", {}).items()},
                    [str(c) for c in d.get("children", [])])
            return cls(int(data["horizon_T"]), nodes, int(data.get("depth_limit", 2)),
                       str(data.get("root", ROOT)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed scenario tree: {exc!r}") from exc

    def stats(self) -> dict:
        dis = self.disruption_nodes()
        return {"nodes": len(self.nodes), "disruption_nodes": len(dis),
                "scenarios": len(self.leaves()),
                "max_depth": max((self.depth(n) for n in dis), default=0),
                "nominal_probability": sum(c.probability for c in self.children(self.root)
                                           if self.is_nominal(c.id))}


def validate_tree(tree: ScenarioTree, components=None) -> None:
    T = tree.horizon_T
    if not tree.nodes:
        raise ValidationError("scenario tree has no nodes")
    if tree.root not in tree.nodes:
        raise ValidationError("root node missing")
    comps = None if components is None else set(components)
    seen = set()
    stack = [tree.root]
    while stack:
        nid = stack.pop()
        if nid in seen:
            raise ValidationError(f"cycle or shared node at {nid!r}")
        seen.add(nid)
        node = tree.nodes[nid]
        if node.id != nid:
            raise ValidationError(f"node key {nid!r} != id {node.id!r}")
        kids = []
        for cid in node.children:
            if cid not in tree.nodes:
                raise ValidationError(f"unknown child {cid!r} of {nid!r}")
            kids.append(tree.nodes[cid])
        if kids:
            total = sum(k.probability for k in kids)
            if abs(total - 1.0) > PROB_TOL:
                raise ValidationError(f"children of {nid!r} sum to {total}")
        n_nominal = 0
        for k in kids:
            if k.parent != nid:
                raise ValidationError(f"{k.id!r} lists parent {k.parent!r}, expected {nid!r}")
            if not 0.0 < k.probability <= 1.0:
                raise ValidationError(f"{k.id!r}: probability {k.probability} outside (0,1]")
            if k.onset == T + 1:
                n_nominal += 1
                if k.children or k.faults() or k.exogenous():
                    raise ValidationError(f"nominal node {k.id!r} must be an empty leaf")
            elif k.onset > T + 1:
                raise InconsistentTree(f"{k.id!r}: onset {k.onset} > T+1")
            elif k.onset < node.onset + 1 or k.onset < 2:
                raise InconsistentTree(f"{k.id!r}: onset {k.onset} not after parent")
            for c, s in k.spread_sets.items():
                if c not in s:
                    raise ValidationError(f"{k.id!r}: spread set of {c!r} lacks {c!r}")
            if comps is not None:
                used = set(k.fault_flags) | set(k.exogenous_flags) | set(k.spread_sets)
                used |= {x for s in k.spread_sets.values() for x in s}
                if used - comps:
                    raise ValidationError(f"{k.id!r}: unknown components {sorted(used - comps)}")
            stack.append(k.id)
        if n_nominal > 1:
            raise ValidationError(f"{nid!r} has {n_nominal} nominal children")
    if seen != set(tree.nodes):
        raise ValidationError("tree has unreachable nodes")


def build_tree(paths: list, horizon_T: int, depth_limit: int = 2) -> ScenarioTree:
    """Fold equally weighted sample paths into a scenario tree."""
    if not paths:
        raise EmptyInput("no sample paths")
    T = horizon_T
    for p in paths:
        last = 1
        for ev in p:
            if not last < ev.onset <= T:
                raise InconsistentTree(f"event onset {ev.onset} invalid after {last}")
            last = ev.onset
    nodes = {ROOT: DisruptionRealization(ROOT, None, 1, 1.0)}
    counter = [0]

    def new_id():
        counter[0] += 1
        return f"w{counter[0]:05d}"

    def expand(nid, suffixes, depth):
        if depth >= depth_limit:
            return
        m = len(suffixes)
        groups = OrderedDict()
        n_empty = 0
        for s in suffixes:
            if not s:
                n_empty += 1
            else:
                groups.setdefault(s[0].key(), (s[0], []))[1].append(s[1:])
        if n_empty == m and nid != ROOT:
            return  # continuation is purely nominal: leave as leaf
        parent_onset = nodes[nid].onset
        for key in sorted(groups):
            ev, rest = groups[key]
            cid = new_id()
            nodes[cid] = DisruptionRealization(
                cid, nid, ev.onset, len(rest) / m,
                {c: 1 for c in sorted(ev.faults)}, {c: 1 for c in sorted(ev.exogenous)},
                ev.spread_sets, [])
            nodes[nid].children.append(cid)
            assert ev.onset > parent_onset
            expand(cid, rest, depth + 1)
        if n_empty:
            cid = new_id()
            nodes[cid] = DisruptionRealization(cid, nid, T + 1, n_empty / m)
            nodes[nid].children.append(cid)

    expand(ROOT, [list(p[:depth_limit]) for p in paths], 0)
    _normalize_siblings(nodes)
    return ScenarioTree(T, nodes, depth_limit)


def _normalize_siblings(nodes):
    # counts/m can leave ~1e-16 rounding; push the residue onto the largest child
    for node in nodes.values():
        if node.children:
            kids = [nodes[c] for c in node.children]
            resid = 1.0 - sum(k.probability for k in kids)
            max(kids, key=lambda k: k.probability).probability += resid


def save_tree(tree: ScenarioTree, path) -> None:
    Path(path).write_text(json.dumps(tree.to_dict(), indent=1, sort_keys=True))


def load_tree(path, components=None) -> ScenarioTree:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict) or "nodes" not in data:
        raise ParseError(f"{path}: missing 'nodes'")
    tree = ScenarioTree.from_dict(data)
    if components is not None:
        validate_tree(tree, components)
    return tree


def tree_from_events(horizon_T: int, children: list, depth_limit: int = 2) -> ScenarioTree:
    """Build a tree from nested ``(probability, DisruptionEvent, grandchildren)``
    triples; the residual probability at each level becomes the nominal child."""
    nodes = {ROOT: DisruptionRealization(ROOT, None, 1, 1.0)}
    counter = [0]

    def add(parent, items, is_root):
        total = 0.0
        for p, ev, sub in items:
            counter[0] += 1
            cid = f"w{counter[0]:05d}"
            nodes[cid] = DisruptionRealization(
                cid, parent, ev.onset, float(p),
                {c: 1 for c in sorted(ev.faults)}, {c: 1 for c in sorted(ev.exogenous)},
                ev.spread_sets, [])
            nodes[parent].children.append(cid)
            total += p
            add(cid, sub or [], False)
        rest = 1.0 - total
        if rest > PROB_TOL or (is_root and not items):
            counter[0] += 1
            cid = f"w{counter[0]:05d}"
            nodes[cid] = DisruptionRealization(cid, parent, horizon_T + 1, rest)
            nodes[parent].children.append(cid)

    add(ROOT, children, True)
    _normalize_siblings(nodes)
    return ScenarioTree(horizon_T, nodes, depth_limit)
