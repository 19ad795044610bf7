"""Small hand-built and seeded random instances used by tests and demos."""

from __future__ import annotations

import math

import numpy as np

from .network import Bus, Generator, Line, Load, PowerNetwork, default_costs
from .scenarios import DisruptionEvent, tree_from_events

DAILY_PROFILE_8 = (0.70, 0.65, 0.80, 0.95, 1.00, 1.05, 1.00, 0.85)


def toy3(T: int = 4) -> PowerNetwork:
    """Three buses: 100 MW generator at bus 1, 60/40 MW loads at buses 2/3."""
    return PowerNetwork(
        T,
        (Bus("1", True), Bus("2"), Bus("3")),
        (Generator("g1", "1", 0.0, 100.0, 1000.0),),
        (Line("l12", "1", "2", 10.0, 80.0, 100.0, 28.5),
         Line("l13", "1", "3", 10.0, 80.0, 100.0, 28.5)),
        (Load("d2", "2", (60.0,) * T, 500.0), Load("d3", "3", (40.0,) * T, 200.0)),
        {"1": 50.0, "2": 50.0, "3": 50.0},
    )


def spread_example_network(T: int = 4) -> PowerNetwork:
    """Bus i with generators g1, g2; bus j1 with g3; bus j3; lines i-j1, i-j3, j1-j3."""
    return default_costs(PowerNetwork(
        T,
        (Bus("i", True), Bus("j1"), Bus("j3")),
        (Generator("g1", "i", 0, 60), Generator("g2", "i", 0, 60, fuel="wind"),
         Generator("g3", "j1", 0, 80)),
        (Line("i-j1", "i", "j1", 5.0, 100.0, 40.0), Line("i-j3", "i", "j3", 5.0, 100.0, 30.0),
         Line("j1-j3", "j1", "j3", 5.0, 100.0, 25.0)),
        (Load("dj1", "j1", (30.0,) * T, 300.0), Load("dj3", "j3", (50.0,) * T, 600.0)),
    ))


def spread_example_set() -> set:
    """Components burned when line i-j1 faults in :func:`spread_example_network`."""
    return {"i", "g2", "i-j1", "i-j3", "j3"}


def ieee14_like(T: int = 8) -> PowerNetwork:
    """IEEE 14-bus topology and loads with invented limits, lengths and fuels."""
    branches = [(1, 2, .05917), (1, 5, .22304), (2, 3, .19797), (2, 4, .17632),
                (2, 5, .17388), (3, 4, .17103), (4, 5, .04211), (4, 7, .20912),
                (4, 9, .55618), (5, 6, .25202), (6, 11, .1989), (6, 12, .25581),
                (6, 13, .13027), (7, 8, .17615), (7, 9, .11001), (9, 10, .0845),
                (9, 14, .27038), (10, 11, .19207), (12, 13, .19988), (13, 14, .34802)]
    loads = {2: 21.7, 3: 94.2, 4: 47.8, 5: 7.6, 6: 11.2, 9: 29.5, 10: 9.0, 11: 3.5,
             12: 6.1, 13: 13.5, 14: 14.9}
    gens = [(1, 332.4, "nuclear"), (2, 140.0, "thermal"), (3, 100.0, "thermal"),
            (6, 100.0, "wind"), (8, 100.0, "wind")]
    rng = np.random.default_rng(14)
    prof = _profile(T)
    buses = tuple(Bus(str(b), b == 1) for b in range(1, 15))
    lines = tuple(Line(f"l{i}-{j}", str(i), str(j), round(1.0 / x, 4),
                       160.0 if i <= 2 else 90.0, float(rng.integers(20, 90)))
                  for i, j, x in branches)
    gen_t = tuple(Generator(f"g{b}", str(b), 0.0, p, fuel=f) for b, p, f in gens)
    prio = {b: float(rng.integers(1, 21) * 50) for b in loads}
    load_t = tuple(Load(f"d{b}", str(b), tuple(round(d * f, 3) for f in prof), prio[b])
                   for b, d in loads.items())
    return default_costs(PowerNetwork(T, buses, gen_t, lines, load_t))


def synthetic_73bus(T: int = 8, seed: int = 73) -> PowerNetwork:
    """Three 24-bus areas plus a hub bus, shaped like the RTS-GMLC system."""
    rng = np.random.default_rng(seed)
    prof = _profile(T)
    buses = [Bus("101", True)]
    lines, gens, loads = [], [], []
    fuels = ["thermal", "thermal", "wind", "nuclear", "thermal", "wind"]
    for a in (1, 2, 3):
        ids = [f"{a}{k:02d}" for k in range(1, 25)]
        if a == 1:
            buses += [Bus(b) for b in ids[1:]]
        else:
            buses += [Bus(b) for b in ids]
        for k in range(24):  # ring
            lines.append((ids[k], ids[(k + 1) % 24]))
        for k in range(0, 24, 3):  # chords
            lines.append((ids[k], ids[(k + 7) % 24]))
        for k in range(0, 24, 2):
            g_id = f"g{ids[k]}"
            fuel = fuels[(k // 2 + a) % len(fuels)]
            pmax = {"thermal": 155.0, "wind": 80.0, "nuclear": 400.0}[fuel]
            gens.append(Generator(g_id, ids[k], 0.0, pmax, fuel=fuel))
        for k in range(24):
            if k % 3 != 1:
                base = float(rng.uniform(40, 180))
                loads.append(Load(f"d{ids[k]}", ids[k], tuple(round(base * f, 3) for f in prof),
                                  float(rng.integers(1, 21) * 50)))
    buses.append(Bus("hub"))
    for a in (1, 2, 3):
        lines.append(("hub", f"{a}13"))
        lines.append((f"{a}20", f"{a % 3 + 1}05"))
    line_t = tuple(Line(f"L{n}", i, j, float(rng.uniform(4, 12)), 250.0,
                        float(rng.integers(10, 120)))
                   for n, (i, j) in enumerate(lines))
    return default_costs(PowerNetwork(T, tuple(buses), tuple(gens), line_t, tuple(loads)))


def _profile(T):
    if T == 8:
        return DAILY_PROFILE_8
    return tuple(0.8 + 0.2 * math.sin(math.pi * t / max(T, 1)) for t in range(T))


def pmin_gap_instance(T: int = 4):
    """Network and depth-1 tree whose disruption stages have an LP integrality gap.

    The large unit has a minimum output above some period demands, so a
    fractional commitment can serve load the integer model must shed.
    """
    net = PowerNetwork(
        T,
        (Bus("1", True), Bus("2")),
        (Generator("gA", "1", 50.0, 120.0, 1000.0), Generator("gB", "1", 0.0, 30.0, 50.0, "wind")),
        (Line("l12", "1", "2", 10.0, 150.0, 100.0, 28.5),),
        (Load("d2", "2", tuple(40.0 if t % 2 == 0 else 70.0 for t in range(T)), 400.0),),
        {"1": 50.0, "2": 50.0},
    )
    ev1 = DisruptionEvent.make(2, ["gA"], [], {"gA": ["gA", "l12"]})
    ev2 = DisruptionEvent.make(3, ["gB"], [], {"gB": ["gB"]})
    tree = tree_from_events(T, [(0.3, ev1, []), (0.3, ev2, [])], depth_limit=1)
    return net, tree


def fairness_instance(T: int = 4):
    """A congested line forces shedding at one load, so equity caps bind."""
    net = PowerNetwork(
        T,
        (Bus("1", True), Bus("2"), Bus("3")),
        (Generator("g1", "1", 0.0, 100.0, 1000.0),),
        (Line("l12", "1", "2", 10.0, 30.0, 100.0, 28.5),
         Line("l13", "1", "3", 10.0, 80.0, 100.0, 28.5)),
        (Load("d2", "2", (60.0,) * T, 500.0), Load("d3", "3", (40.0,) * T, 200.0)),
        {"1": 50.0, "2": 50.0, "3": 50.0},
    )
    ev = DisruptionEvent.make(3, ["l13"], [], {"l13": ["l13", "3"]})
    tree = tree_from_events(T, [(0.2, ev, [])], depth_limit=1)
    return net, tree


def restoration_instance(T: int = 6, variant: int = 0):
    """A line that is risky only for disruptions early in the horizon.

    Bus 3 is served well only through ``l13``; shutting ``l13`` off during the
    risky periods and restoring it later is cheaper than keeping it off.
    """
    cost13 = (3000.0, 2000.0, 4000.0)[variant % 3]
    lim23 = (20.0, 30.0, 10.0)[variant % 3]
    net = PowerNetwork(
        T,
        (Bus("1", True), Bus("2"), Bus("3")),
        (Generator("g1", "1", 0.0, 200.0, 1000.0),),
        (Line("l12", "1", "2", 10.0, 150.0, 50.0, 14.25),
         Line("l13", "1", "3", 10.0, 150.0, 50.0, cost13),
         Line("l23", "2", "3", 10.0, lim23, 50.0, 14.25)),
        (Load("d2", "2", (50.0,) * T, 300.0), Load("d3", "3", (60.0,) * T, 500.0)),
        {"1": 50.0, "2": 50.0, "3": 50.0},
    )
    p = (0.15, 0.2, 0.1)[variant % 3]
    ev2 = DisruptionEvent.make(2, ["l13"], [], {"l13": ["l13", "3"]})
    ev3 = DisruptionEvent.make(3, ["l13"], [], {"l13": ["l13"]})
    tree = tree_from_events(T, [(p, ev2, []), (p, ev3, [])], depth_limit=1)
    return net, tree


def random_network(rng, n_bus: int, T: int, max_components: int | None = None,
                   n_gen: int | None = None) -> PowerNetwork:
    """Connected random network: spanning tree plus at most one chord."""
    buses = tuple(Bus(f"b{k}", k == 0) for k in range(n_bus))
    edges = [(int(rng.integers(k)), k) for k in range(1, n_bus)]
    n_gen = n_gen if n_gen is not None else int(rng.integers(1, 3))
    extra = n_bus >= 4 and (max_components is None
                            or n_bus + n_gen + len(edges) + 1 <= max_components)
    if extra and rng.random() < 0.6:
        i, j = sorted(rng.choice(n_bus, 2, replace=False))
        if (i, j) not in edges:
            edges.append((int(i), int(j)))
    lines = tuple(Line(f"l{i}-{j}", f"b{i}", f"b{j}", float(rng.uniform(2, 10)),
                       float(rng.choice([40.0, 60.0, 90.0])), float(rng.integers(20, 200)))
                  for i, j in edges)
    gen_buses = rng.choice(n_bus, n_gen, replace=False)
    gens = []
    for k, b in enumerate(gen_buses):
        fuel = str(rng.choice(["thermal", "wind", "nuclear"]))
        pmax = float(rng.integers(6, 14) * 10)
        pmin = float(rng.choice([0.0, 0.0, 0.3 * pmax]))
        gens.append(Generator(f"g{k}", f"b{b}", pmin, pmax, fuel=fuel))
    load_buses = [b for b in range(n_bus) if b not in set(gen_buses)] or [n_bus - 1]
    loads = []
    for b in load_buses:
        base = float(rng.integers(2, 8) * 10)
        loads.append(Load(f"d{b}", f"b{b}",
                          tuple(round(base * float(rng.uniform(0.7, 1.2)), 2) for _ in range(T)),
                          float(rng.integers(1, 21) * 50)))
    return default_costs(PowerNetwork(T, buses, tuple(gens), lines, tuple(loads)))


def random_event(rng, net: PowerNetwork, onset: int) -> DisruptionEvent:
    comps = net.components
    faults = list(rng.choice(comps, int(rng.integers(1, 3)), replace=False))
    spread = {}
    for c in faults:
        k = int(rng.integers(0, 3))
        spread[c] = [c] + list(rng.choice(comps, k, replace=False))
    exo = list(rng.choice(comps, 1)) if rng.random() < 0.3 else []
    return DisruptionEvent.make(onset, faults, exo, spread)


def random_tree(rng, net: PowerNetwork, n_first: int, depth: int = 2, n_second: int = 1):
    """Tree with ``n_first`` depth-1 disruptions, each with up to ``n_second``
    depth-2 disruptions when ``depth`` is 2. Nominal residual mass included."""
    T = net.horizon_T
    items = []
    p_first = rng.dirichlet(np.ones(n_first + 1)) * 0.9
    used = set()
    for k in range(n_first):
        onset = int(rng.integers(2, T + 1))
        ev = random_event(rng, net, onset)
        while ev.key() in used:
            ev = random_event(rng, net, onset)
        used.add(ev.key())
        sub = []
        if depth >= 2 and onset < T:
            q = rng.dirichlet(np.ones(n_second + 1)) * 0.9
            keys = set()
            for j in range(n_second):
                ev2 = random_event(rng, net, int(rng.integers(onset + 1, T + 1)))
                if ev2.key() in keys:
                    continue
                keys.add(ev2.key())
                sub.append((float(q[j]), ev2, []))
        items.append((float(p_first[k]), ev, sub))
    return tree_from_events(T, items, depth_limit=depth)


def random_instance(seed: int, max_components: int = 12):
    """Seeded small instance: 3-8 buses, T in {3,4,5}, 3-9 tree nodes, depth <= 2."""
    rng = np.random.default_rng(seed)
    T = int(rng.choice([3, 4, 5]))
    n_bus = int(rng.integers(3, 6)) if max_components <= 12 else int(rng.integers(5, 9))
    net = random_network(rng, n_bus, T, max_components)
    while max_components and net.n_components > max_components and n_bus > 3:
        n_bus -= 1
        net = random_network(rng, n_bus, T, max_components)
    n_first = int(rng.integers(1, 3))
    depth = 2 if T >= 3 else 1
    tree = random_tree(rng, net, n_first, depth, n_second=1)
    while not 3 <= len(tree.nodes) <= 9:
        tree = random_tree(rng, net, n_first, depth, n_second=1)
    return net, tree
