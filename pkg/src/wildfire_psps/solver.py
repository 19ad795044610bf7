"""Row/column model container and the HiGHS backend (via scipy.optimize).

A :class:`LinearModel` is a plain sparse MILP::

    min  c @ x + obj_const
    s.t. row_lo <= A @ x <= row_hi
         col_lo <= x <= col_hi,  x[j] integer where integer[j]

``solve_mip`` uses :func:`scipy.optimize.milp`; ``solve_lp`` uses the HiGHS
dual simplex through :func:`scipy.optimize.linprog` so that returned row
duals are basic.
"""

from __future__ import annotations

import copy
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .errors import BackendError

INF = np.inf
BACKEND_ENV = "PSPS_SOLVER_BACKEND"
DUMP_ENV = "PSPS_LP_DUMP_DIR"
_BACKENDS = ("highs",)


class LinearModel:
    def __init__(self, name: str = "model"):
        self.name = name
        self.col_lo: list[float] = []
        self.col_hi: list[float] = []
        self.integer: list[bool] = []
        self.obj: list[float] = []
        self.col_names: list[str] = []
        self.obj_const = 0.0
        # triplets for the constraint matrix
        self._ri: list[int] = []
        self._ci: list[int] = []
        self._v: list[float] = []
        self.row_lo: list[float] = []
        self.row_hi: list[float] = []
        self.row_names: list[str] = []
        self._cache = None

    @property
    def n_cols(self) -> int:
        return len(self.obj)

    @property
    def n_rows(self) -> int:
        return len(self.row_lo)

    def add_var(self, name, lo=0.0, hi=INF, integer=False, obj=0.0) -> int:
        self._cache = None
        self.col_lo.append(float(lo))
        self.col_hi.append(float(hi))
        self.integer.append(bool(integer))
        self.obj.append(float(obj))
        self.col_names.append(name)
        return len(self.obj) - 1

    def add_row(self, cols, coefs, lo=-INF, hi=INF, name=None) -> int:
        self._cache = None
        r = len(self.row_lo)
        for c, a in zip(cols, coefs):
            if a != 0.0:
                self._ri.append(r)
                self._ci.append(int(c))
                self._v.append(float(a))
        self.row_lo.append(float(lo))
        self.row_hi.append(float(hi))
        self.row_names.append(name or f"r{r}")
        return r

    def set_row_bounds(self, row, lo, hi):
        self.row_lo[row] = float(lo)
        self.row_hi[row] = float(hi)
        if self._cache is not None:
            self._cache["row_lo"][row] = lo
            self._cache["row_hi"][row] = hi

    def copy(self) -> "LinearModel":
        new = copy.copy(self)
        for attr in ("col_lo", "col_hi", "integer", "obj", "col_names", "_ri", "_ci",
                     "_v", "row_lo", "row_hi", "row_names"):
            setattr(new, attr, list(getattr(self, attr)))
        new._cache = None
        return new

    def is_mip(self) -> bool:
        return any(self.integer)

    def compiled(self) -> dict:
        if self._cache is None:
            A = sp.csr_matrix((self._v, (self._ri, self._ci)),
                              shape=(self.n_rows, self.n_cols))
            self._cache = {
                "A": A,
                "c": np.asarray(self.obj, float),
                "col_lo": np.asarray(self.col_lo, float),
                "col_hi": np.asarray(self.col_hi, float),
                "integer": np.asarray(self.integer, np.uint8),
                "row_lo": np.asarray(self.row_lo, float),
                "row_hi": np.asarray(self.row_hi, float),
            }
        return self._cache

    def row_activity(self, x) -> np.ndarray:
        return self.compiled()["A"] @ np.asarray(x, float)

    def violations(self, x, tol=1e-6) -> list[str]:
        """Names of rows/columns violated by ``x`` (scaled absolute tolerance).

        Row tolerances grow with the row's integer coefficients: a solver
        accepts integers within ``tol`` and rounding them shifts the activity.
        """
        m = self.compiled()
        x = np.asarray(x, float)
        act = m["A"] @ x
        bad = []
        ints = m["integer"].astype(bool)
        scale = 1.0 + np.abs(act) + abs(m["A"][:, np.flatnonzero(ints)]).sum(axis=1).A1
        for r in np.flatnonzero((act < m["row_lo"] - tol * scale)
                                | (act > m["row_hi"] + tol * scale)):
            bad.append(self.row_names[r])
        for j in np.flatnonzero((x < m["col_lo"] - tol) | (x > m["col_hi"] + tol)):
            bad.append(self.col_names[j])
        for j in np.flatnonzero(ints & (np.abs(x - np.round(x)) > tol)):
            bad.append(self.col_names[j] + ":integrality")
        return bad

    def write_lp(self, path) -> None:
        """Write a CPLEX-LP-format text dump (debugging aid)."""
        m = self.compiled()
        A = m["A"].tocsr()
        cn = [n.replace(" ", "_") for n in self.col_names]

        def expr(idx, vals):
            return " ".join(f"{'+' if v >= 0 else '-'} {abs(v):.12g} {cn[j]}"
                            for j, v in zip(idx, vals)) or "0 " + (cn[0] if cn else "")

        out = [f"\\ {self.name}", "Minimize", " obj: " + expr(
            np.flatnonzero(m["c"]), m["c"][np.flatnonzero(m["c"])]), "Subject To"]
        for r in range(self.n_rows):
            row = A.getrow(r)
            e = expr(row.indices, row.data)
            lo, hi = self.row_lo[r], self.row_hi[r]
            name = self.row_names[r].replace(" ", "_")
            if lo == hi:
                out.append(f" {name}: {e} = {lo:.12g}")
            else:
                if lo > -INF:
                    out.append(f" {name}_lo: {e} >= {lo:.12g}")
                if hi < INF:
                    out.append(f" {name}_hi: {e} <= {hi:.12g}")
        out.append("Bounds")
        for j in range(self.n_cols):
            lo, hi = self.col_lo[j], self.col_hi[j]
            lo_s = "-inf" if lo == -INF else f"{lo:.12g}"
            hi_s = "+inf" if hi == INF else f"{hi:.12g}"
            out.append(f" {lo_s} <= {cn[j]} <= {hi_s}")
        gens = [cn[j] for j in range(self.n_cols) if self.integer[j]]
        if gens:
            out.append("General")
            out.extend(" " + g for g in gens)
        out.append("End")
        Path(path).write_text("\n".join(out) + "\n")


@dataclass(frozen=True)
class SolverParams:
    mip_gap: float = 1e-6
    time_limit: float | None = None
    threads: int = 1  # scipy's HiGHS wrapper is single-threaded; kept for config parity
    seed: int = 0
    dump_dir: str | None = None

    def __post_init__(self):
        if self.mip_gap < 0:
            raise ValueError("mip_gap must be >= 0")

    def with_gap(self, gap: float) -> "SolverParams":
        return SolverParams(gap, self.time_limit, self.threads, self.seed, self.dump_dir)


@dataclass(frozen=True)
class SolveOutcome:
    status: str  # Optimal | Infeasible | Unbounded | LimitReached
    objective: float
    x: np.ndarray | None
    duals: np.ndarray | None
    gap: float
    wall_time: float
    bound: float  # proven lower bound on the optimum

    @property
    def ok(self) -> bool:
        return self.status == "Optimal"

    def value(self, j):
        return self.x[j]


def _backend():
    name = os.environ.get(BACKEND_ENV, "highs").lower()
    if name not in _BACKENDS:
        raise BackendError(f"unknown solver backend {name!r}; available: {_BACKENDS}")
    return name


_dump_counter = 0


def _maybe_dump(model: LinearModel, params: SolverParams, kind: str):
    global _dump_counter
    d = params.dump_dir or os.environ.get(DUMP_ENV)
    if d:
        Path(d).mkdir(parents=True, exist_ok=True)
        _dump_counter += 1
        model.write_lp(Path(d) / f"{_dump_counter:05d}_{kind}_{model.name}.lp")


def solve_mip(model: LinearModel, params: SolverParams = SolverParams(),
              c: np.ndarray | None = None, obj_const: float | None = None,
              integer: np.ndarray | None = None) -> SolveOutcome:
    """Solve ``model`` as a MILP; ``c``/``integer`` override the stored data."""
    _backend()
    _maybe_dump(model, params, "mip")
    m = model.compiled()
    c = m["c"] if c is None else c
    k = model.obj_const if obj_const is None else obj_const
    ints = m["integer"] if integer is None else integer
    options = {"mip_rel_gap": params.mip_gap, "presolve": True}
    if params.time_limit is not None:
        options["time_limit"] = params.time_limit
    cons = LinearConstraint(m["A"], m["row_lo"], m["row_hi"]) if model.n_rows else ()
    t0 = time.perf_counter()
    try:
        res = milp(c, constraints=cons, integrality=ints,
                   bounds=Bounds(m["col_lo"], m["col_hi"]), options=options)
    except Exception as exc:  # pragma: no cover - solver crash
        raise BackendError(f"milp failed: {exc}") from exc
    wall = time.perf_counter() - t0
    if res.status == 0:
        obj = float(res.fun) + k
        bound = getattr(res, "mip_dual_bound", None)
        bound = obj if bound is None or not np.isfinite(bound) else float(bound) + k
        bound = min(bound, obj)
        gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
        return SolveOutcome("Optimal", obj, np.asarray(res.x), None, gap, wall, bound)
    if res.status == 1:
        x = None if res.x is None else np.asarray(res.x)
        obj = INF if res.fun is None else float(res.fun) + k
        return SolveOutcome("LimitReached", obj, x, None, INF, wall, -INF)
    if res.status == 2:
        return SolveOutcome("Infeasible", INF, None, None, INF, wall, INF)
    if res.status == 3:
        return SolveOutcome("Unbounded", -INF, None, None, INF, wall, -INF)
    raise BackendError(f"milp status {res.status}: {res.message}")


def solve_lp(model: LinearModel, params: SolverParams = SolverParams(),
             c: np.ndarray | None = None, obj_const: float | None = None) -> SolveOutcome:
    """Solve the continuous relaxation with dual simplex; returns row duals.

    ``duals[r]`` is the sensitivity of the optimal value to the bounds of row
    ``r`` (for an equality row, d obj / d rhs).
    """
    _backend()
    _maybe_dump(model, params, "lp")
    m = model.compiled()
    c = m["c"] if c is None else c
    k = model.obj_const if obj_const is None else obj_const
    A, lo, hi = m["A"], m["row_lo"], m["row_hi"]
    eq = lo == hi
    up = ~eq & np.isfinite(hi)
    dn = ~eq & np.isfinite(lo)
    A_ub = sp.vstack([A[up], -A[dn]]).tocsr() if (up.any() or dn.any()) else None
    b_ub = np.concatenate([hi[up], -lo[dn]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = lo[eq] if eq.any() else None
    options = {}
    if params.time_limit is not None:
        options["time_limit"] = params.time_limit
    t0 = time.perf_counter()
    try:
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=np.column_stack([m["col_lo"], m["col_hi"]]),
                      method="highs-ds", options=options)
    except Exception as exc:  # pragma: no cover
        raise BackendError(f"linprog failed: {exc}") from exc
    wall = time.perf_counter() - t0
    if res.status == 0:
        duals = np.zeros(model.n_rows)
        if A_eq is not None:
            duals[eq] = res.eqlin.marginals
        if A_ub is not None:
            mu = res.ineqlin.marginals
            n_up = int(up.sum())
            duals[up] += mu[:n_up]
            duals[dn] -= mu[n_up:]
        obj = float(res.fun) + k
        return SolveOutcome("Optimal", obj, np.asarray(res.x), duals, 0.0, wall, obj)
    if res.status == 1:
        return SolveOutcome("LimitReached", INF, None, None, INF, wall, -INF)
    if res.status == 2:
        return SolveOutcome("Infeasible", INF, None, None, INF, wall, INF)
    if res.status == 3:
        return SolveOutcome("Unbounded", -INF, None, None, INF, wall, -INF)
    raise BackendError(f"linprog status {res.status}: {res.message}")


def require_optimal(out: SolveOutcome, what: str) -> SolveOutcome:
    if not out.ok:
        raise BackendError(f"{what}: solver returned {out.status}")
    return out
