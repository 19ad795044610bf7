"""Cut generation for node value functions.

All four families produce an affine minorant ``v + slope @ (z - anchor)`` of a
disruption node's cost-to-go as a function of the inherited shutoff state.
Validity rests on the Lagrangian relaxation of the nonanticipativity rows:
for any multiplier vector the relaxed optimum is a lower bound at every
binary state, so intercepts are taken from proven MIP bounds.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix, solvers
from scipy.optimize import linprog

from .errors import CutGenerationError
from .formulation import StageModel, check_anchor
from .solver import INF, SolverParams, require_optimal, solve_lp, solve_mip

FAMILIES = ("BC", "SBC", "LC", "SMC")
DOMAINS = ("binary", "interval")

solvers.options["show_progress"] = False


@dataclass(frozen=True)
class CutRecord:
    owner: str
    slope: tuple
    intercept: float
    anchor: tuple
    family: str
    z_domain: str = "binary"
    iteration: int = 0
    oracle_calls: int = 0
    wall_time: float = 0.0
    tight: bool = True  # False when the dual solver ran out of budget
    note: str = ""

    def __post_init__(self):
        if not np.all(np.isfinite(self.slope)) or not np.isfinite(self.intercept):
            raise CutGenerationError(f"non-finite cut for {self.owner!r}")

    def value_at(self, z) -> float:
        lam = np.asarray(self.slope)
        return self.intercept + float(lam @ (np.asarray(z, float) - np.asarray(self.anchor)))

    def key(self) -> tuple:
        """Identity of the affine function (owner, slope, constant term)."""
        lam = np.asarray(self.slope, float)
        const = self.intercept - float(lam @ np.asarray(self.anchor, float))
        return (self.owner, lam.tobytes(), float(const))

    def to_dict(self) -> dict:
        return {"owner": self.owner, "family": self.family, "z_domain": self.z_domain,
                "slope": list(self.slope), "intercept": self.intercept,
                "anchor": list(self.anchor), "iteration": self.iteration,
                "oracle_calls": self.oracle_calls, "wall_time": self.wall_time,
                "tight": self.tight, "note": self.note}

    @classmethod
    def from_dict(cls, d: dict) -> "CutRecord":
        return cls(d["owner"], tuple(map(float, d["slope"])), float(d["intercept"]),
                   tuple(map(float, d["anchor"])), d["family"], d.get("z_domain", "binary"),
                   int(d.get("iteration", 0)), int(d.get("oracle_calls", 0)),
                   float(d.get("wall_time", 0.0)), bool(d.get("tight", True)), d.get("note", ""))


@dataclass(frozen=True)
class DualSolverParams:
    max_oracle_calls: int = 100
    tolerance: float = 1e-6
    prox_weight: float = 10.0
    initial: tuple | None = None  # defaults to the LP dual of the copy rows
    descent: float = 0.1
    min_weight: float = 1e-6
    norm_tol: float = 1e-3  # relative slack on the minimum norm accepted by SMC
    smc_max_calls: int = 100  # oracle budget of the norm-minimizing phase
    solver: SolverParams = field(default_factory=lambda: SolverParams(mip_gap=1e-9))

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.max_oracle_calls < 1:
            raise ValueError("max_oracle_calls must be >= 1")


@dataclass(frozen=True)
class OracleResult:
    value: float      # proven lower bound on the relaxed optimum
    objective: float  # objective of the returned relaxed solution
    subgradient: np.ndarray
    z_copy: np.ndarray


class LagrangianOracle:
    """Relaxed node model: copy rows dropped, multipliers moved to the objective.

    ``R(lam) = min  c x + lam @ (anchor - z_copy)`` with the copy variables
    restricted to ``{0,1}`` or ``[0,1]``; everything else keeps its type.
    """

    def __init__(self, model: StageModel, anchor, z_domain: str = "binary",
                 params: SolverParams = SolverParams(mip_gap=1e-9)):
        if z_domain not in DOMAINS:
            raise ValueError(f"z_domain must be one of {DOMAINS}")
        self.anchor = check_anchor(anchor, len(model.copy_vars))
        self.lp = model.lp.copy()
        for r in model.copy_rows:
            self.lp.set_row_bounds(int(r), -INF, INF)
        comp = self.lp.compiled()
        self.base_c = comp["c"].copy()
        self.integer = comp["integer"].copy()
        if z_domain == "interval":
            self.integer[model.copy_vars] = 0
        self.const = self.lp.obj_const
        self.copy_vars = np.asarray(model.copy_vars)
        self.params = params
        self.z_domain = z_domain
        self.calls = 0

    def __call__(self, lam) -> OracleResult:
        lam = np.asarray(lam, float)
        if not np.all(np.isfinite(lam)):
            raise ValueError("multipliers must be finite")
        c = self.base_c.copy()
        c[self.copy_vars] -= lam
        out = require_optimal(solve_mip(self.lp, self.params, c=c,
                                        obj_const=self.const + float(lam @ self.anchor),
                                        integer=self.integer), "Lagrangian relaxation")
        self.calls += 1
        zc = out.x[self.copy_vars]
        return OracleResult(out.bound, out.objective, self.anchor - zc, zc)


def lagrangian_value(model: StageModel, anchor, lam, z_domain: str = "binary",
                     params: SolverParams = SolverParams(mip_gap=1e-9)):
    """(value, subgradient) of the Lagrangian relaxation at ``lam``."""
    res = LagrangianOracle(model, anchor, z_domain, params)(lam)
    return res.value, res.subgradient


def node_value(model: StageModel, anchor, params: SolverParams = SolverParams(mip_gap=1e-9)):
    """Solve the augmented node model at ``anchor``; returns the SolveOutcome."""
    model.set_anchor(anchor)
    return require_optimal(solve_mip(model.lp, params), f"node {model.node_id}")


def _lp_dual(model: StageModel, anchor, params):
    model.set_anchor(anchor)
    out = require_optimal(solve_lp(model.lp, params), f"LP relaxation of {model.node_id}")
    return out.objective, out.duals[model.copy_rows].copy()


def _record(model, owner, anchor, lam, v, family, z_domain, t0, calls=0, tight=True, note=""):
    return CutRecord(owner, tuple(float(x) for x in lam), float(v), tuple(float(x) for x in anchor),
                     family, z_domain, 0, calls, time.perf_counter() - t0, tight, note)


def benders_cut(model: StageModel, anchor, params: SolverParams = SolverParams(mip_gap=1e-9),
                owner: str | None = None) -> CutRecord:
    """Slope from the LP duals of the copy rows, intercept the LP value."""
    t0 = time.perf_counter()
    anchor = check_anchor(anchor, len(model.copy_vars))
    v, lam = _lp_dual(model, anchor, params)
    return _record(model, owner or model.node_id, anchor, lam, v, "BC", "interval", t0)


def strengthened_benders_cut(model: StageModel, anchor, z_domain: str = "binary",
                             params: SolverParams = SolverParams(mip_gap=1e-9),
                             owner: str | None = None) -> CutRecord:
    """Benders slope with the intercept recomputed by one Lagrangian solve."""
    t0 = time.perf_counter()
    anchor = check_anchor(anchor, len(model.copy_vars))
    v_lp, lam = _lp_dual(model, anchor, params)
    res = LagrangianOracle(model, anchor, z_domain, params)(lam)
    # both intercepts are valid for this slope; keep the larger
    v = max(res.value, v_lp)
    return _record(model, owner or model.node_id, anchor, lam, v, "SBC", z_domain, t0, 1)


def _simplex_qp(G: np.ndarray, a: np.ndarray, u: float) -> np.ndarray:
    """argmin over the unit simplex of |G' alpha|^2 / (2u) - a @ alpha."""
    k = len(a)
    if k == 1:
        return np.ones(1)
    P = G @ G.T / u + 1e-12 * np.eye(k)
    sol = solvers.qp(matrix(P), matrix(-a), matrix(-np.eye(k)), matrix(np.zeros(k)),
                     matrix(np.ones((1, k))), matrix(1.0))
    alpha = np.clip(np.asarray(sol["x"]).ravel(), 0.0, None)
    return alpha / alpha.sum()


def maximize_dual(oracle: LagrangianOracle, lam0, dp: DualSolverParams, target=None):
    """Proximal bundle ascent on R; returns (best lam, best bound, converged)."""
    lam_c = np.asarray(lam0, float)
    r = oracle(lam_c)
    f_c = r.objective
    best_lam, best_v = lam_c.copy(), r.value
    pts, vals, grads = [lam_c.copy()], [r.objective], [r.subgradient]
    u = dp.prox_weight
    scale = lambda f: max(1.0, abs(f))
    while True:
        if target is not None and best_v >= target - 1e-9 * scale(target):
            return best_lam, best_v, True
        if oracle.calls >= dp.max_oracle_calls:
            return best_lam, best_v, False
        G = np.array(grads)
        a = np.array(vals) + np.einsum("ij,ij->i", G, lam_c - np.array(pts))
        alpha = _simplex_qp(G, a, u)
        d = alpha @ G / u
        model_val = float(np.min(a + G @ d))
        pred = model_val - f_c
        if pred <= dp.tolerance * scale(f_c):
            return best_lam, best_v, True
        lam_n = lam_c + d
        r = oracle(lam_n)
        pts.append(lam_n)
        vals.append(r.objective)
        grads.append(r.subgradient)
        if r.value > best_v:
            best_lam, best_v = lam_n.copy(), r.value
        if r.objective - f_c >= dp.descent * pred:
            lam_c, f_c = lam_n, r.objective
            u = max(u / 2.0, dp.min_weight)


def lagrangian_cut(model: StageModel, anchor, z_domain: str = "binary",
                   params: DualSolverParams = DualSolverParams(),
                   owner: str | None = None) -> CutRecord:
    """Cut from (approximately) maximizing the Lagrangian dual at ``anchor``."""
    t0 = time.perf_counter()
    anchor = check_anchor(anchor, len(model.copy_vars))
    sp_ = params.solver
    target = None
    if params.initial is None:
        _, lam0 = _lp_dual(model, anchor, sp_)
    else:
        lam0 = np.asarray(params.initial, float)
    if z_domain == "binary":
        # with a binary copy domain the dual optimum equals the node value
        target = node_value(model, anchor, sp_).bound
    oracle = LagrangianOracle(model, anchor, z_domain, sp_)
    lam, v, ok = maximize_dual(oracle, lam0, params, target)
    note = "" if ok else "OracleLimit"
    return _record(model, owner or model.node_id, anchor, lam, v, "LC", z_domain, t0,
                   oracle.calls, ok, note)


def _min_norm_point(P: np.ndarray, rhs: np.ndarray, n: int):
    """min |lam|^2 s.t. P @ lam >= rhs; None if the system is infeasible."""
    feas = linprog(np.zeros(n), A_ub=-P, b_ub=-rhs, bounds=[(None, None)] * n, method="highs")
    if feas.status == 2:
        return None
    sol = solvers.qp(matrix(np.eye(n)), matrix(np.zeros(n)), matrix(-P), matrix(-rhs),
                     options={"abstol": 1e-11, "reltol": 1e-11, "feastol": 1e-11,
                              "show_progress": False})
    if sol["status"] not in ("optimal", "unknown"):
        return feas.x
    return np.asarray(sol["x"]).ravel()


def min_norm_multiplier(oracle, n: int, target: float, max_calls: int = 100,
                        start=None, norm_tol: float = 1e-3):
    """Kelley outer approximation of ``min |lam|^2 s.t. R(lam) >= target``.

    ``start`` is an optional ``(lam, value)`` already meeting the target. Each
    master point that misses the target is blended with the incumbent: by
    concavity of R the blend at weight ``theta`` has value at least
    ``(1 - theta) R(master) + theta R(incumbent)``, so a shorter feasible
    point is found without another oracle call. Stops when the master norm
    (a lower bound) is within ``norm_tol`` of the incumbent's.

    Returns ``(lam, value_lower_bound, proven)`` or None when no point
    reaching the target is known.
    """
    tol = 1e-9 * max(1.0, abs(target))
    goal = target - tol
    best = None if start is None else (np.asarray(start[0], float), float(start[1]))
    lam = np.zeros(n)
    P, rhs = [], []
    while oracle.calls < max_calls:
        r = oracle(lam)
        if r.value >= goal:
            if best is None or np.linalg.norm(lam) <= np.linalg.norm(best[0]):
                best = (lam, r.value)
            return best[0], best[1], True
        if best is not None and best[1] > r.value:
            theta = min(1.0, (goal - r.value) / (best[1] - r.value))
            blend = lam + theta * (best[0] - lam)
            if np.linalg.norm(blend) < np.linalg.norm(best[0]):
                best = (blend, (1 - theta) * r.value + theta * best[1])
        # concavity: R(l) <= R(lam) + g @ (l - lam) for every l
        P.append(r.subgradient)
        rhs.append(target - r.objective + float(r.subgradient @ lam))
        nxt = _min_norm_point(np.array(P), np.array(rhs), n)
        if nxt is None:
            return None if best is None else (best[0], best[1], False)
        lam = nxt
        if best is not None and (np.linalg.norm(lam)
                                 >= (1 - norm_tol) * np.linalg.norm(best[0]) - 1e-12):
            return best[0], best[1], True
    return None if best is None else (best[0], best[1], False)


def square_min_cut(model: StageModel, anchor, delta: float = 1e-4, z_domain: str = "binary",
                   params: DualSolverParams = DualSolverParams(),
                   owner: str | None = None) -> CutRecord:
    """Minimum-norm slope whose Lagrangian value reaches ``(1 - delta)`` of the
    node value at ``anchor``; falls back to the Lagrangian cut when that
    target is out of reach."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    t0 = time.perf_counter()
    anchor = check_anchor(anchor, len(model.copy_vars))
    sp_ = params.solver
    f_lo = node_value(model, anchor, sp_).bound
    target = f_lo - delta * abs(f_lo)
    lc = lagrangian_cut(model, anchor, z_domain, params, owner)
    calls = lc.oracle_calls
    owner = owner or model.node_id
    if lc.intercept < target - 1e-9 * max(1.0, abs(target)):
        return CutRecord(lc.owner, lc.slope, lc.intercept, lc.anchor, "SMC", z_domain, 0,
                         calls, time.perf_counter() - t0, lc.tight,
                         "InfeasibleTarget: fell back to LC")
    oracle = LagrangianOracle(model, anchor, z_domain, sp_)
    budget = min(params.smc_max_calls, max(1, params.max_oracle_calls - calls))
    lam, v, proven = min_norm_multiplier(oracle, len(anchor), target, budget,
                                         start=(np.array(lc.slope), lc.intercept),
                                         norm_tol=params.norm_tol)
    # intercept: the Lagrangian value at the returned slope (never below the
    # concavity bound already certified)
    v = max(v, oracle(lam).value)
    return _record(model, owner, anchor, lam, v, "SMC", z_domain, t0, calls + oracle.calls,
                   True, "" if proven else "OracleLimit")


def generate_cut(family: str, model: StageModel, anchor, z_domain: str = "binary",
                 delta: float = 1e-4, params: DualSolverParams = DualSolverParams(),
                 owner: str | None = None) -> CutRecord:
    if family == "BC":
        return benders_cut(model, anchor, params.solver, owner)
    if family == "SBC":
        return strengthened_benders_cut(model, anchor, z_domain, params.solver, owner)
    if family == "LC":
        return lagrangian_cut(model, anchor, z_domain, params, owner)
    if family == "SMC":
        return square_min_cut(model, anchor, delta, z_domain, params, owner)
    raise ValueError(f"unknown cut family {family!r}; expected one of {FAMILIES}")


def append_cut_log(path, cut: CutRecord) -> None:
    """Append one JSON line describing ``cut``."""
    with open(path, "a") as fh:
        fh.write(json.dumps(cut.to_dict()) + "\n")
