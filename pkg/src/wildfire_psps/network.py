"""Power-network data model, JSON ingestion and cost defaults.

Components are the union of buses, generators and lines; their ids share one
namespace so that scenario files can refer to any component by id alone.
The canonical component order is buses, then generators, then lines.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ParseError, UnknownBus, ValidationError

FUEL_DAMAGE_COST = {"wind": 50.0, "thermal": 1000.0, "nuclear": 2500.0}
BUS_DAMAGE_COST = 50.0
LINE_COST_PER_KM = 0.285
PRIORITY_RANGE = (50.0, 1000.0)


@dataclass(frozen=True)
class Bus:
    id: str
    is_reference: bool = False


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    p_min: float
    p_max: float
    damage_cost: float | None = None
    fuel: str = "thermal"


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    susceptance_mag: float
    thermal_limit: float
    length: float = 0.0
    damage_cost: float | None = None


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    demand_by_period: tuple[float, ...]
    priority: float | None = None


@dataclass(frozen=True)
class PowerNetwork:
    """Immutable DC network over ``horizon_T`` periods.

    Line flow convention: an energized line carries
    ``P = base_mva * susceptance_mag * (theta_to - theta_from)`` and this flow
    enters ``from_bus`` and leaves ``to_bus`` in the nodal balance.
    """

    horizon_T: int
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    lines: tuple[Line, ...]
    loads: tuple[Load, ...]
    bus_damage_cost: dict[str, float] = field(default_factory=dict)
    big_m_angle: float = 2 * math.pi
    base_mva: float = 100.0

    def __post_init__(self):
        _validate(self)

    # cached lookups; the dataclass is frozen so these are computed lazily
    @property
    def components(self) -> list[str]:
        return ([b.id for b in self.buses] + [g.id for g in self.generators]
                + [l.id for l in self.lines])

    @property
    def n_components(self) -> int:
        return len(self.buses) + len(self.generators) + len(self.lines)

    def component_index(self) -> dict[str, int]:
        return {c: k for k, c in enumerate(self.components)}

    def bus_index(self) -> dict[str, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def reference_bus(self) -> Bus:
        return next(b for b in self.buses if b.is_reference)

    def component_kind(self, cid: str) -> str:
        n_b, n_g = len(self.buses), len(self.generators)
        k = self.component_index()[cid]
        return "bus" if k < n_b else "generator" if k < n_b + n_g else "line"

    def damage_costs(self) -> list[float]:
        """Damage cost per component in canonical order (missing -> 0)."""
        out = [self.bus_damage_cost.get(b.id, 0.0) for b in self.buses]
        out += [g.damage_cost or 0.0 for g in self.generators]
        out += [l.damage_cost or 0.0 for l in self.lines]
        return out

    def priorities(self) -> list[float]:
        return [d.priority if d.priority is not None else PRIORITY_RANGE[0]
                for d in self.loads]


def _validate(net: PowerNetwork) -> None:
    if net.horizon_T < 1:
        raise ValidationError("horizon_T must be >= 1")
    ids = net.components + [d.id for d in net.loads]
    seen = set()
    for i in ids:
        if i in seen:
            raise ValidationError(f"duplicate id {i!r}")
        seen.add(i)
    bus_ids = {b.id for b in net.buses}
    refs = [b for b in net.buses if b.is_reference]
    if len(refs) != 1:
        raise ValidationError(f"expected exactly one reference bus, found {len(refs)}")
    for g in net.generators:
        if g.bus not in bus_ids:
            raise ValidationError(f"generator {g.id!r} references unknown bus {g.bus!r}")
        if not 0 <= g.p_min <= g.p_max:
            raise ValidationError(f"generator {g.id!r}: need 0 <= p_min <= p_max")
        if g.fuel not in FUEL_DAMAGE_COST:
            raise ValidationError(f"generator {g.id!r}: unknown fuel {g.fuel!r}")
    for l in net.lines:
        for b in (l.from_bus, l.to_bus):
            if b not in bus_ids:
                raise ValidationError(f"line {l.id!r} references unknown bus {b!r}")
        if l.from_bus == l.to_bus:
            raise ValidationError(f"line {l.id!r} is a self-loop")
        if l.susceptance_mag <= 0 or l.thermal_limit <= 0:
            raise ValidationError(f"line {l.id!r}: susceptance and limit must be > 0")
        if l.length < 0:
            raise ValidationError(f"line {l.id!r}: negative length")
    for d in net.loads:
        if d.bus not in bus_ids:
            raise ValidationError(f"load {d.id!r} references unknown bus {d.bus!r}")
        if len(d.demand_by_period) != net.horizon_T:
            raise ValidationError(
                f"load {d.id!r}: {len(d.demand_by_period)} demands for T={net.horizon_T}")
        if any(x < 0 for x in d.demand_by_period):
            raise ValidationError(f"load {d.id!r}: negative demand")
        if d.priority is not None and d.priority <= 0:
            raise ValidationError(f"load {d.id!r}: priority must be > 0")
    for b in net.bus_damage_cost:
        if b not in bus_ids:
            raise ValidationError(f"bus_damage_cost references unknown bus {b!r}")


def incidence(net: PowerNetwork, bus: str):
    """Return (loads, generators, lines) attached to ``bus`` as id lists."""
    if bus not in {b.id for b in net.buses}:
        raise UnknownBus(bus)
    loads = [d.id for d in net.loads if d.bus == bus]
    gens = [g.id for g in net.generators if g.bus == bus]
    lines = [l.id for l in net.lines if bus in (l.from_bus, l.to_bus)]
    return loads, gens, lines


def default_costs(net: PowerNetwork) -> PowerNetwork:
    """Fill in missing damage costs and load priorities.

    Explicit values are kept, except priorities outside [50, 1000] which are
    clamped into that range. Idempotent.
    """
    lo, hi = PRIORITY_RANGE
    gens = tuple(g if g.damage_cost is not None
                 else replace(g, damage_cost=FUEL_DAMAGE_COST[g.fuel])
                 for g in net.generators)
    lines = tuple(l if l.damage_cost is not None
                  else replace(l, damage_cost=LINE_COST_PER_KM * l.length)
                  for l in net.lines)
    loads = tuple(replace(d, priority=lo if d.priority is None
                          else min(max(d.priority, lo), hi))
                  for d in net.loads)
    bus_cost = {b.id: net.bus_damage_cost.get(b.id, BUS_DAMAGE_COST) for b in net.buses}
    return replace(net, generators=gens, lines=lines, loads=loads,
                   bus_damage_cost=bus_cost)


# -- JSON -------------------------------------------------------------------

def network_from_dict(data: dict) -> PowerNetwork:
    try:
        T = int(data["horizon_T"])
        buses = tuple(Bus(str(b["id"]), bool(b.get("is_reference", False)))
                      for b in data["buses"])
        gens = tuple(Generator(str(g["id"]), str(g["bus"]), float(g["p_min"]),
                               float(g["p_max"]), _opt_float(g.get("damage_cost")),
                               g.get("fuel", "thermal"))
                     for g in data.get("generators", []))
        lines = tuple(Line(str(l["id"]), str(l["from_bus"]), str(l["to_bus"]),
                           float(l["susceptance_mag"]), float(l["thermal_limit"]),
                           float(l.get("length", 0.0)), _opt_float(l.get("damage_cost")))
                      for l in data.get("lines", []))
        loads = tuple(Load(str(d["id"]), str(d["bus"]),
                           tuple(float(x) for x in d["demand_by_period"]),
                           _opt_float(d.get("priority")))
                      for d in data.get("loads", []))
        bus_cost = {str(k): float(v) for k, v in data.get("bus_damage_cost", {}).items()}
        extra = {}
        if "big_m_angle" in data:
            extra["big_m_angle"] = float(data["big_m_angle"])
        if "base_mva" in data:
            extra["base_mva"] = float(data["base_mva"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed network data: {exc!r}") from exc
    return PowerNetwork(T, buses, gens, lines, loads, bus_cost, **extra)


def _opt_float(x):
    return None if x is None else float(x)


def network_to_dict(net: PowerNetwork) -> dict:
    def drop_none(d):
        return {k: v for k, v in d.items() if v is not None}

    return {
        "horizon_T": net.horizon_T,
        "base_mva": net.base_mva,
        "big_m_angle": net.big_m_angle,
        "buses": [{"id": b.id, "is_reference": b.is_reference} for b in net.buses],
        "generators": [drop_none(vars(g)) for g in net.generators],
        "lines": [drop_none(vars(l)) for l in net.lines],
        "loads": [drop_none({**vars(d), "demand_by_period": list(d.demand_by_period)})
                  for d in net.loads],
        "bus_damage_cost": dict(net.bus_damage_cost),
    }


def load_network(path) -> PowerNetwork:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be an object")
    return network_from_dict(data)


def save_network(net: PowerNetwork, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1))
