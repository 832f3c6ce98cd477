"""Column generation where the pricing problem also decides which flows a configuration carries.

Flow attachment (delta) multiplies both the placement of the first/last VNF
and the inter-VNF arcs, so the pricing problem is quadratic. The products are
replaced by binary AND variables ``c = delta * a`` and ``q = delta * b``, which
integrality makes exact.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Mapping

from .master import FlowMaster, InfeasibleModelError, Unit, colocated_configuration, reachable_colocation_nodes
from .milp import EQ, GE, LE, LIMIT, LpModel, solve_milp
from .network import ChainSpec, Scenario
from .solution import Configuration, MappingSolution

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-6
PRICING_TIME_LIMIT = 30.0


@dataclass
class PricingSolutionQ:
    chain_id: str
    delta: dict[tuple[int, int], int]
    a: dict[tuple[int, int], int]
    b: dict[tuple[int, int], int]
    c: dict[tuple[tuple[int, int], int, int], int]
    q: dict[tuple[tuple[int, int], int, int], int]
    red_cost: float
    configuration: Configuration
    limited: bool = False


@dataclass
class CgTraceRow:
    iteration: int
    chain: str
    red_cost: float
    rmp_obj: float
    columns: int


@dataclass
class CgResult:
    solution: MappingSolution
    trace: list[CgTraceRow] = field(default_factory=list)
    lp_objective: float = math.nan
    status: str = "optimal"

    def write_trace(self, path) -> None:
        write_trace(path, self.trace)


def write_trace(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "chain", "red_cost", "rmp_obj", "columns"])
        for r in rows:
            w.writerow([r.iteration, r.chain, _fmt(r.red_cost), _fmt(r.rmp_obj), r.columns])


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def seed_columns(scenario: Scenario) -> list[Configuration]:
    """Per chain, every VNF on one node with all of the chain's flows attached.

    One such column exists for every NFV node reachable by all the chain's
    flows, so a single-node solution is always representable.
    """
    from .paths import HopTable

    hops = HopTable(scenario.net)
    out = []
    for chain in scenario.active_chains:
        unit = Unit(chain.id, chain, scenario.demands.for_chain(chain.id))
        flows = [d.pair for d in unit.demands]
        for v in reachable_colocation_nodes(unit, scenario.net.nfv_nodes, hops):
            out.append(colocated_configuration(unit, v, flows=flows))
    return out


def build_rmp_q(scenario: Scenario, K: int, seed: list[Configuration] | None = None,
                budgets: dict[str, int] | None = None, artificial: bool = True) -> FlowMaster:
    """Restricted master over ``seed`` (default: :func:`seed_columns`)."""
    master = FlowMaster(scenario, K, budgets, artificial=artificial)
    for cfg in seed_columns(scenario) if seed is None else seed:
        master.add_configuration(cfg)
    return master


def _build_pricing(master: FlowMaster, chain: ChainSpec, duals: Mapping[str, float]):
    scenario = master.scenario
    net = master.net
    nfv = master.nfv
    n = chain.length
    own = sorted(scenario.demands.for_chain(chain.id), key=lambda d: d.pair)
    y = lambda r: duals.get(r, 0.0)  # noqa: E731
    m = LpModel(f"pricing-{chain.id}")
    delta = {d.pair: m.add_var(f"delta[{d.src},{d.dst}]", 0, 1, integer=True) for d in own}
    a = {(v, i): m.add_var(f"a[{v},{i}]", 0, 1, integer=True) for v in nfv for i in range(n)}
    b = {(i, l.id): m.add_var(f"b[{i},{l.id}]", 0, 1, integer=True) for i in range(n - 1) for l in net.arcs}
    c = {(d.pair, v, i): m.add_var(f"c[{d.src},{d.dst},{v},{i}]", 0, 1, integer=True)
         for d in own for v in nfv for i in range(n)}
    q = {(d.pair, i, l.id): m.add_var(f"q[{d.src},{d.dst},{i},{l.id}]", 0, 1, integer=True)
         for d in own for i in range(n - 1) for l in net.arcs}
    w = {(v, i): m.add_var(f"w[{v},{i}]", 0, math.inf, integer=True) for v in nfv for i in range(n)}

    obj: dict[int, float] = {}

    def add(j, coef):
        obj[j] = obj.get(j, 0.0) + coef

    m.obj_offset = -y(f"inst[{chain.id}]")
    for (v, i), j in a.items():
        f = chain.vnfs[i]
        add(j, -y(f"xub[{v},{f}]") - y(f"xlb[{v},{f}]"))
    for (v, i), j in w.items():
        add(j, -y(f"core[{v}]"))
    for d in own:
        k = d.key
        add(delta[d.pair], -y(f"assign[{k[0]},{k[1]},{k[2]}]"))
        for i in range(n - 1):
            for l in net.arcs:
                add(q[d.pair, i, l.id], d.gbps * (1.0 - y(f"cap[{l.id}]")))
        for v in nfv:
            if v == d.src:
                add(c[d.pair, v, 0], -y(f"src[{k[0]},{k[1]},{k[2]}]"))
            else:
                add(c[d.pair, v, 0], -y(f"srcin[{k[0]},{k[1]},{k[2]}][{v}]") - y(f"srcflow[{k[0]},{k[1]},{k[2]}][{v}]"))
            if v == d.dst:
                add(c[d.pair, v, n - 1], -y(f"dst[{k[0]},{k[1]},{k[2]}]"))
            else:
                add(c[d.pair, v, n - 1], -y(f"dstout[{k[0]},{k[1]},{k[2]}][{v}]") - y(f"dstflow[{k[0]},{k[1]},{k[2]}][{v}]"))
    for j, coef in obj.items():
        m.obj[j] = coef

    # at least one flow, one node per position
    m.add_row("flows", {j: 1 for j in delta.values()}, GE, 1)
    for i in range(n):
        m.add_row(f"place[{i}]", {a[v, i]: 1 for v in nfv}, EQ, 1)
    # each segment is a unit flow from the node of position i to that of i+1
    for i in range(n - 1):
        for v in range(net.num_nodes):
            row = {b[i, l]: 1 for l in net.out_arcs(v)}
            for l in net.in_arcs(v):
                row[b[i, l]] = -1
            if v in master.nfv_set:
                row[a[v, i]] = -1
                row[a[v, i + 1]] = row.get(a[v, i + 1], 0) + 1
            m.add_row(f"seg[{i},{v}]", row, EQ, 0)
        for v in range(net.num_nodes):
            m.add_row(f"segin[{i},{v}]", {b[i, l]: 1 for l in net.in_arcs(v)}, LE, 1)
    # AND linearization
    for (p, v, i), j in c.items():
        m.add_row(f"cd[{p},{v},{i}]", {j: 1, delta[p]: -1}, LE, 0)
        m.add_row(f"ca[{p},{v},{i}]", {j: 1, a[v, i]: -1}, LE, 0)
        m.add_row(f"cl[{p},{v},{i}]", {j: 1, delta[p]: -1, a[v, i]: -1}, GE, -1)
    for (p, i, l), j in q.items():
        m.add_row(f"qd[{p},{i},{l}]", {j: 1, delta[p]: -1}, LE, 0)
        m.add_row(f"qb[{p},{i},{l}]", {j: 1, b[i, l]: -1}, LE, 0)
        m.add_row(f"ql[{p},{i},{l}]", {j: 1, delta[p]: -1, b[i, l]: -1}, GE, -1)
    # cores and link capacity of the configuration alone
    for (v, i), j in w.items():
        ncore = scenario.vnfs[chain.vnfs[i]].cores_per_gbps
        row = {j: 1}
        for d in own:
            row[c[d.pair, v, i]] = -ncore * d.gbps
        m.add_row(f"wc[{v},{i}]", row, GE, 0)
    for v in nfv:
        m.add_row(f"cores[{v}]", {w[v, i]: 1 for i in range(n)}, LE, net.nodes[v].cores)
    for l in net.arcs:
        row = {q[d.pair, i, l.id]: d.gbps for d in own for i in range(n - 1)}
        if row:
            m.add_row(f"capq[{l.id}]", row, LE, l.capacity)
    return m, own, (delta, a, b, c, q, w)


def solve_pricing_q(master: FlowMaster, chain: ChainSpec, duals: Mapping[str, float], *,
                    eps: float = DEFAULT_EPS, time_limit: float | None = PRICING_TIME_LIMIT,
                    return_all: bool = False) -> PricingSolutionQ | None:
    """Most negative reduced-cost configuration of ``chain``; None if none beats -eps.

    With ``return_all`` the optimum is returned even when it does not improve.
    """
    m, own, (delta, a, b, c, q, w) = _build_pricing(master, chain, duals)
    sol = solve_milp(m, time_limit=time_limit)
    limited = sol.status == LIMIT
    if not sol.has_solution:
        if limited:
            log.warning("pricing for %s hit its time limit without a column", chain.id)
        return None
    x = sol.x
    val = lambda j: int(round(x[j]))  # noqa: E731
    n = chain.length
    placement = tuple(next(v for v in master.nfv if val(a[v, i])) for i in range(n))
    segs = []
    for i in range(n - 1):
        arcs = [l for (ii, l), j in b.items() if ii == i and val(j)]
        segs.append(master._order(placement[i], placement[i + 1], arcs) if arcs else ())
    flows = frozenset(p for p, j in delta.items() if val(j))
    load = sum(d.gbps for d in own if d.pair in flows)
    cfg = Configuration(chain.id, placement, tuple(segs), load, flows)
    out = PricingSolutionQ(
        chain.id,
        {p: val(j) for p, j in delta.items()},
        {k: val(j) for k, j in a.items()},
        {k: val(j) for k, j in b.items()},
        {k: val(j) for k, j in c.items()},
        {k: val(j) for k, j in q.items()},
        sol.objective,
        cfg,
        limited,
    )
    if limited:
        log.warning("pricing for %s hit its time limit; using the incumbent", chain.id)
    if return_all or out.red_cost < -eps:
        return out
    return None


def run_cg_ilp(scenario: Scenario, K: int, *, eps: float = DEFAULT_EPS, budgets: dict[str, int] | None = None,
               max_iterations: int = 10_000, time_limit: float | None = None,
               pricing_time_limit: float | None = PRICING_TIME_LIMIT, ilp_time_limit: float | None = None,
               seed: list[Configuration] | None = None) -> CgResult:
    """Round-robin column generation, then the final restricted master as an ILP."""
    t0 = time.perf_counter()
    if not scenario.demands:
        raise ValueError("no demands")
    master = build_rmp_q(scenario, K, seed, budgets)
    chains = list(scenario.active_chains)
    retired = {c.id: False for c in chains}
    trace: list[CgTraceRow] = []
    status = "optimal"
    it = 0
    lp = master.solve_relaxation()
    if not lp.optimal:
        raise RuntimeError(f"restricted master LP failed: {lp.status} {lp.message}")
    while not all(retired.values()):
        if it >= max_iterations:
            status = "iteration-limit"
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            status = "time-limit"
            break
        for chain in chains:
            if retired[chain.id]:
                continue
            it += 1
            priced = solve_pricing_q(master, chain, lp.duals, eps=eps, time_limit=pricing_time_limit,
                                     return_all=True)
            if priced is not None and priced.limited:
                status = "pricing-limited"
            improved = False
            if priced is not None:
                rc = master.reduced_cost(priced.configuration, lp.duals)
                if rc < -eps and master.add_configuration(priced.configuration) is not None:
                    improved = True
                    lp = master.solve_relaxation()
                    if not lp.optimal:
                        raise RuntimeError(f"restricted master LP failed: {lp.status} {lp.message}")
            red = priced.red_cost if priced is not None else math.nan
            trace.append(CgTraceRow(it, chain.id, red, lp.objective, len(master.columns)))
            if improved:
                for other in retired:
                    retired[other] = False
            else:
                retired[chain.id] = True
            if it >= max_iterations:
                break
    lp_obj = lp.objective
    sol = master.solve_integer(time_limit=ilp_time_limit)
    if not sol.has_solution:
        if sol.status == LIMIT:
            raise TimeoutError("cg-ilp: final ILP hit its time limit without an incumbent")
        raise InfeasibleModelError("cg-ilp: final ILP infeasible", master.diagnose_infeasibility(ilp_time_limit))
    if sol.status == LIMIT:
        status = "ilp-time-limit"
    out = master.extract(sol, method="cg-ilp", status=status, lp_objective=lp_obj)
    out.runtime = time.perf_counter() - t0
    out.meta.update(iterations=it, columns=len(master.columns), eps=eps, K=K,
                    artificial_in_lp=master.artificial_in_use(lp))
    return CgResult(out, trace, lp_obj, status)
