"""Sparse LP/MILP models solved with HiGHS, with dual extraction and
column addition for column generation.

Dual convention: for a minimisation, ``duals[r]`` is the sensitivity of the
optimal objective to the right-hand side of row ``r``, so the reduced cost
of column ``j`` is ``c_j - sum_r duals[r] * a_rj``. Rows ``<=`` get duals
<= 0, rows ``>=`` get duals >= 0, equality rows are free.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp
from scipy.sparse import coo_matrix, csc_matrix

log = logging.getLogger(__name__)

LE, GE, EQ = "<=", ">=", "="
FEAS_TOL = 1e-7
INT_TOL = 1e-6
GAP_TOL = 1e-6
DUALITY_TOL = 1e-6
RC_TOL = 1e-6

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit"
ERROR = "error"


class ModelError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


@dataclass
class SolveHealth:
    """Running worst-case of LP optimality certificates across all solves."""

    lp_solves: int = 0
    worst_duality_gap: float = 0.0
    worst_basic_reduced_cost: float = 0.0
    worst_nonbasic_reduced_cost: float = 0.0
    failures: list = field(default_factory=list)

    def record(self, name: str, gap: float, basic_rc: float, nonbasic_rc: float) -> None:
        self.lp_solves += 1
        self.worst_duality_gap = max(self.worst_duality_gap, gap)
        self.worst_basic_reduced_cost = max(self.worst_basic_reduced_cost, basic_rc)
        self.worst_nonbasic_reduced_cost = max(self.worst_nonbasic_reduced_cost, nonbasic_rc)
        if gap > DUALITY_TOL or basic_rc > RC_TOL or nonbasic_rc > RC_TOL:
            self.failures.append((name, gap, basic_rc, nonbasic_rc))

    def reset(self) -> None:
        self.__init__()


HEALTH = SolveHealth()


class LpModel:
    """Minimisation model: named variables with bounds, named sparse rows."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.obj: list[float] = []
        self.integer: list[bool] = []
        self.row_names: list[str] = []
        self.row_index: dict[str, int] = {}
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self.obj_offset = 0.0
        self._r: list[int] = []
        self._c: list[int] = []
        self._v: list[float] = []

    # -- construction -------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.row_names)

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf, obj: float = 0.0, integer: bool = False) -> int:
        if lb > ub:
            raise ModelError(f"variable {name}: lower bound {lb} > upper bound {ub}")
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        self.integer.append(bool(integer))
        return len(self.var_names) - 1

    def add_row(self, name: str, coeffs: Mapping[int, float] | Iterable[tuple[int, float]], sense: str, rhs: float) -> int:
        if name in self.row_index:
            raise ModelError(f"duplicate row name {name!r}")
        if sense not in (LE, GE, EQ):
            raise ModelError(f"row {name}: bad sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        idx = len(self.row_names)
        nv = self.num_vars
        for j, a in items:
            if not 0 <= j < nv:
                raise ModelError(f"row {name}: unknown variable index {j}")
            if a != 0:
                self._r.append(idx)
                self._c.append(j)
                self._v.append(float(a))
        self.row_names.append(name)
        self.row_index[name] = idx
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        return idx

    def add_column(self, name: str, obj: float, column: Mapping[str, float], lb: float = 0.0,
                   ub: float = math.inf, integer: bool = False) -> int:
        """Append a variable with its coefficients in existing rows (by name)."""
        rows = []
        for rname, a in column.items():
            r = self.row_index.get(rname)
            if r is None:
                raise ModelError(f"column {name}: unknown row {rname!r}")
            rows.append((r, a))
        j = self.add_var(name, lb, ub, obj, integer)
        for r, a in rows:
            if a != 0:
                self._r.append(r)
                self._c.append(j)
                self._v.append(float(a))
        return j

    def set_coefficient(self, row: str, var: int, value: float) -> None:
        self._r.append(self.row_index[row])
        self._c.append(var)
        self._v.append(float(value))

    def set_bounds(self, var: int, lb: float | None = None, ub: float | None = None) -> None:
        if lb is not None:
            self.lb[var] = float(lb)
        if ub is not None:
            self.ub[var] = float(ub)

    def matrix(self) -> csc_matrix:
        # duplicate (row, col) entries are summed
        return coo_matrix((self._v, (self._r, self._c)), shape=(self.num_rows, self.num_vars)).tocsc()

    def column_of(self, var: int) -> dict[str, float]:
        out: dict[str, float] = {}
        for r, c, v in zip(self._r, self._c, self._v):
            if c == var:
                name = self.row_names[r]
                out[name] = out.get(name, 0.0) + v
        return out

    def copy(self) -> "LpModel":
        m = LpModel(self.name)
        for attr in ("var_names", "lb", "ub", "obj", "integer", "row_names", "sense", "rhs", "_r", "_c", "_v"):
            setattr(m, attr, list(getattr(self, attr)))
        m.row_index = dict(self.row_index)
        m.obj_offset = self.obj_offset
        return m

    def relaxed(self) -> "LpModel":
        m = self.copy()
        m.integer = [False] * m.num_vars
        return m

    # -- LP text dump -------------------------------------------------------

    def to_lp_text(self) -> str:
        """CPLEX-LP format dump for cross-checking with external solvers."""

        def vname(j: int) -> str:
            return f"x{j}"

        def terms(pairs) -> str:
            out = []
            for j, a in pairs:
                sign = "-" if a < 0 else "+"
                out.append(f"{sign} {abs(a):.12g} {vname(j)}")
            return " ".join(out) if out else "0 x0"

        lines = [f"\\ model {self.name}", "Minimize", " obj: " + terms((j, c) for j, c in enumerate(self.obj) if c != 0)]
        lines.append("Subject To")
        a = self.matrix().tocsr()
        for i, name in enumerate(self.row_names):
            row = a.getrow(i)
            pairs = zip(row.indices.tolist(), row.data.tolist())
            op = {LE: "<=", GE: ">=", EQ: "="}[self.sense[i]]
            lines.append(f" r{i}: {terms(pairs)} {op} {self.rhs[i]:.12g}")
        lines.append("Bounds")
        for j in range(self.num_vars):
            lo = "-inf" if self.lb[j] == -math.inf else f"{self.lb[j]:.12g}"
            hi = "+inf" if self.ub[j] == math.inf else f"{self.ub[j]:.12g}"
            lines.append(f" {lo} <= {vname(j)} <= {hi}")
        ints = [vname(j) for j in range(self.num_vars) if self.integer[j]]
        if ints:
            lines.append("General")
            lines.append(" " + " ".join(ints))
        lines.append("End")
        return "\n".join(lines) + "\n"

    def write_lp(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_lp_text())


@dataclass
class LpSolution:
    status: str
    objective: float = math.nan
    x: np.ndarray | None = None
    duals: dict[str, float] = field(default_factory=dict)
    reduced_costs: np.ndarray | None = None
    message: str = ""
    runtime: float = 0.0
    bound: float = math.nan
    gap: float = math.nan
    duality_gap: float = math.nan
    max_basic_reduced_cost: float = math.nan

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def has_solution(self) -> bool:
        return self.x is not None

    def value(self, var: int) -> float:
        return float(self.x[var])

    def dual(self, row: str) -> float:
        return self.duals.get(row, 0.0)


def _split_rows(m: LpModel):
    a = m.matrix().tocsr()
    sense = np.array(m.sense, dtype=object)
    rhs = np.array(m.rhs, dtype=float)
    le = np.flatnonzero(sense == LE)
    ge = np.flatnonzero(sense == GE)
    eq = np.flatnonzero(sense == EQ)
    return a, rhs, le, ge, eq


def _iteration_cap() -> int | None:
    raw = os.environ.get("SCMAP_SIMPLEX_MAX_ITER")
    if not raw:
        return None
    return int(raw)


def _certify(m: LpModel, a, x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, np.ndarray]:
    """Strong-duality gap, worst basic and worst nonbasic reduced-cost violations."""
    c = np.asarray(m.obj, dtype=float)
    lb = np.asarray(m.lb, dtype=float)
    ub = np.asarray(m.ub, dtype=float)
    rhs = np.asarray(m.rhs, dtype=float)
    aty = a.T @ y
    d = c - aty
    # scale: magnitude of the terms whose difference forms d
    scale = np.maximum(1.0, np.maximum(np.abs(c), abs(a).T @ np.abs(y)))
    span = np.maximum(1.0, np.abs(x))
    at_lb = np.abs(x - lb) <= FEAS_TOL * span
    at_ub = np.abs(ub - x) <= FEAS_TOL * span
    basic = ~(at_lb | at_ub)
    basic_rc = float(np.max(np.abs(d[basic]) / scale[basic])) if basic.any() else 0.0
    # nonbasic sign conditions: at lower -> d >= 0, at upper -> d <= 0
    viol = np.zeros_like(d)
    only_lb = at_lb & ~at_ub
    only_ub = at_ub & ~at_lb
    viol[only_lb] = np.maximum(0.0, -d[only_lb])
    viol[only_ub] = np.maximum(0.0, d[only_ub])
    nonbasic_rc = float(np.max(viol / scale)) if len(d) else 0.0
    # dual objective: b'y + sum of bound terms carried by the reduced costs
    dual_obj = float(rhs @ y)
    pos = d > 0
    neg = d < 0
    dual_obj += float(np.sum(d[pos] * np.where(np.isfinite(lb[pos]), lb[pos], 0.0)))
    dual_obj += float(np.sum(d[neg] * np.where(np.isfinite(ub[neg]), ub[neg], 0.0)))
    primal_obj = float(c @ x)
    gap = abs(primal_obj - dual_obj) / max(1.0, abs(primal_obj))
    return gap, basic_rc, nonbasic_rc, d


def solve_lp(m: LpModel, *, check: bool = True) -> LpSolution:
    """Solve the continuous relaxation of ``m`` (integrality flags ignored)."""
    if m.num_vars < 1:
        raise ModelError("model has no variables")
    t0 = time.perf_counter()
    a, rhs, le, ge, eq = _split_rows(m)
    a_ub = None
    b_ub = None
    if len(le) or len(ge):
        from scipy.sparse import vstack

        a_ub = vstack([a[le], -a[ge]]).tocsc()
        b_ub = np.concatenate([rhs[le], -rhs[ge]])
    a_eq = a[eq].tocsc() if len(eq) else None
    b_eq = rhs[eq] if len(eq) else None
    bounds = list(zip([None if v == -math.inf else v for v in m.lb], [None if v == math.inf else v for v in m.ub]))
    options = {"presolve": True}
    cap = _iteration_cap()
    if cap is not None:
        options["maxiter"] = cap
    res = linprog(np.asarray(m.obj, dtype=float), A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs-ds", options=options)
    runtime = time.perf_counter() - t0
    if res.status == 2:
        return LpSolution(INFEASIBLE, message=res.message, runtime=runtime)
    if res.status == 3:
        return LpSolution(UNBOUNDED, message=res.message, runtime=runtime)
    if res.status == 1:
        return LpSolution(LIMIT, message=res.message, runtime=runtime)
    if res.status != 0:
        raise NumericalError(f"LP {m.name}: {res.message}")
    x = np.asarray(res.x, dtype=float)
    y = np.zeros(m.num_rows)
    if len(le) or len(ge):
        mu = np.asarray(res.ineqlin.marginals, dtype=float)
        y[le] = mu[: len(le)]
        y[ge] = -mu[len(le):]
    if len(eq):
        y[eq] = np.asarray(res.eqlin.marginals, dtype=float)
    sol = LpSolution(OPTIMAL, objective=float(res.fun) + m.obj_offset, x=x,
                     duals=dict(zip(m.row_names, y.tolist())), message=res.message, runtime=runtime)
    gap, basic_rc, nonbasic_rc, d = _certify(m, a, x, y)
    sol.reduced_costs = d
    sol.duality_gap = gap
    sol.max_basic_reduced_cost = basic_rc
    sol.bound = sol.objective
    sol.gap = 0.0
    if check:
        HEALTH.record(m.name, gap, basic_rc, nonbasic_rc)
        if gap > DUALITY_TOL or basic_rc > RC_TOL or nonbasic_rc > RC_TOL:
            log.warning("LP %s: optimality certificate outside tolerance (gap=%.2e, basic rc=%.2e, nonbasic rc=%.2e)",
                        m.name, gap, basic_rc, nonbasic_rc)
    return sol


def _objective_at(m: LpModel, x: np.ndarray) -> float:
    return float(np.asarray(m.obj) @ x) + m.obj_offset


def is_feasible_point(m: LpModel, x: np.ndarray, tol: float = 1e-6) -> bool:
    x = np.asarray(x, dtype=float)
    lb = np.asarray(m.lb)
    ub = np.asarray(m.ub)
    if np.any(x < lb - tol) or np.any(x > ub + tol):
        return False
    integer = np.asarray(m.integer, dtype=bool)
    if np.any(np.abs(x[integer] - np.round(x[integer])) > tol):
        return False
    act = m.matrix() @ x
    for i, s in enumerate(m.sense):
        r = m.rhs[i]
        scale = max(1.0, abs(r))
        if s == LE and act[i] > r + tol * scale:
            return False
        if s == GE and act[i] < r - tol * scale:
            return False
        if s == EQ and abs(act[i] - r) > tol * scale:
            return False
    return True


def solve_milp(m: LpModel, time_limit: float | None = None, gap_tol: float = GAP_TOL,
               warm_start: np.ndarray | None = None) -> LpSolution:
    """Branch-and-bound over the integrality-flagged variables.

    ``warm_start`` is a known feasible point; the returned incumbent is never
    worse than it.
    """
    if m.num_vars < 1:
        raise ModelError("model has no variables")
    t0 = time.perf_counter()
    a, rhs, le, ge, eq = _split_rows(m)
    lo = np.full(m.num_rows, -np.inf)
    hi = np.full(m.num_rows, np.inf)
    sense = np.array(m.sense, dtype=object)
    lo[sense == GE] = rhs[sense == GE]
    hi[sense == LE] = rhs[sense == LE]
    lo[sense == EQ] = rhs[sense == EQ]
    hi[sense == EQ] = rhs[sense == EQ]
    constraints = [LinearConstraint(a, lo, hi)] if m.num_rows else []
    options = {"mip_rel_gap": gap_tol, "disp": False}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = milp(np.asarray(m.obj, dtype=float), constraints=constraints,
               integrality=np.asarray(m.integer, dtype=int), bounds=Bounds(m.lb, m.ub), options=options)
    runtime = time.perf_counter() - t0
    x = None if res.x is None else np.asarray(res.x, dtype=float)
    if res.status == 0:
        status = OPTIMAL
    elif res.status == 2:
        status = INFEASIBLE
    elif res.status == 3:
        status = UNBOUNDED
    elif res.status == 1:
        status = LIMIT
    else:
        status = ERROR
    if x is not None:
        integer = np.asarray(m.integer, dtype=bool)
        x[integer] = np.round(x[integer])
    sol = LpSolution(status, objective=_objective_at(m, x) if x is not None else math.nan, x=x,
                     message=str(res.message), runtime=runtime)
    sol.bound = float(getattr(res, "mip_dual_bound", math.nan) or math.nan) + m.obj_offset
    sol.gap = float(getattr(res, "mip_gap", math.nan) or 0.0) if x is not None else math.nan
    if warm_start is not None and is_feasible_point(m, warm_start):
        ws_obj = _objective_at(m, warm_start)
        if x is None or ws_obj < sol.objective - 1e-9 * max(1.0, abs(ws_obj)):
            sol.x = np.asarray(warm_start, dtype=float)
            sol.objective = ws_obj
            if status == INFEASIBLE:
                sol.status = LIMIT
    return sol
