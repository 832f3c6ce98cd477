"""Master-problem formulations over a pool of configurations.

``FlowMaster`` holds configurations that carry their own flow sets (the
monolithic ILP and the flow-attaching column generation). ``GroupMaster``
holds one single-instance pseudo-chain per traffic group (two-phase model).

Both share the resource bookkeeping (VNF presence, NFV node budget,
replicas, cores, link capacity) and the per-demand access/egress routing
variables. Row names are stable so duals can be looked up by name.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .milp import EQ, GE, LE, LpModel, LpSolution, solve_lp, solve_milp
from .network import ChainSpec, Demand, Scenario
from .paths import HopTable, trace_walk
from .solution import Configuration, MappingSolution, assemble

PENALTY_FACTOR = 1e3


class InfeasibleModelError(RuntimeError):
    """The integer master has no solution; ``families`` names the binding constraints."""

    def __init__(self, message: str, families: Sequence[str] = ()):
        self.families = tuple(families)
        if self.families:
            message += " (binding: " + ", ".join(self.families) + ")"
        super().__init__(message)


@dataclass(frozen=True)
class Unit:
    """Something the master selects configurations for: a chain or a traffic group."""

    id: str
    chain: ChainSpec
    demands: tuple[Demand, ...]

    @property
    def load(self) -> float:
        return sum(d.gbps for d in self.demands)


def artificial_penalty(scenario: Scenario) -> float:
    return PENALTY_FACTOR * scenario.demands.total * scenario.net.num_nodes


def _seg_rows(prefix: str, key) -> str:
    return f"{prefix}[{key[0]},{key[1]},{key[2]}]"


class _MasterBase:
    def __init__(self, scenario: Scenario, K: int, *, artificial: bool = True, strengthen: bool = False):
        self.scenario = scenario
        self.net = scenario.net
        self.K = int(K)
        self.artificial = artificial
        self.strengthen = strengthen
        self.penalty = artificial_penalty(scenario)
        self.model = LpModel(type(self).__name__)
        self.columns: list[Configuration] = []
        self.column_var: list[int] = []
        self.column_unit: list[str] = []
        self._keys: set[tuple] = set()
        self.artificial_vars: list[int] = []
        self.nfv = self.net.nfv_nodes
        self.nfv_set = set(self.nfv)
        self.vnfs = scenario.vnf_names
        hops = HopTable(self.net)
        hops.require(d.pair for d in scenario.demands)
        self.hops = hops

    # -- shared rows --------------------------------------------------------

    def _build_resources(self) -> None:
        m = self.model
        self.x_vf: dict[tuple[int, str], int] = {}
        self.h_v: dict[int, int] = {}
        for v in self.nfv:
            self.h_v[v] = m.add_var(f"h[{v}]", 0, 1)
            for f in self.vnfs:
                self.x_vf[v, f] = m.add_var(f"x[{v},{f}]", 0, 1)
        m.add_row("K", {self.h_v[v]: 1 for v in self.nfv}, LE, self.K)
        budget = min(self.K, len(self.nfv)) if self.strengthen else len(self.nfv)
        for f in self.vnfs:
            r = self.scenario.vnfs[f].max_replicas
            if r < budget:
                m.add_row(f"rep[{f}]", {self.x_vf[v, f]: 1 for v in self.nfv}, LE, r)
        nf = max(1, len(self.vnfs))
        for v in self.nfv:
            row = {self.x_vf[v, f]: 1 for f in self.vnfs}
            m.add_row(f"hub[{v}]", {**row, self.h_v[v]: -nf}, LE, 0)
            m.add_row(f"hlb[{v}]", {**row, self.h_v[v]: -1}, GE, 0)
            if self.strengthen:
                for f in self.vnfs:
                    m.add_row(f"hx[{v},{f}]", {self.x_vf[v, f]: 1, self.h_v[v]: -1}, LE, 0)
        for v in self.nfv:
            m.add_row(f"core[{v}]", {}, LE, self.net.nodes[v].cores)

    def _build_routing(self, demands: Iterable[Demand], first_term, last_term) -> None:
        """Access (src -> first VNF) and egress (last VNF -> dst) routing per demand.

        ``first_term(d, v)`` / ``last_term(d, v)`` give {var: coef} for the
        placement indicator of the first/last VNF of d's unit at node v; for
        column-based terms they return {} and columns fill the rows later.
        """
        m = self.model
        net = self.net
        self.ya: dict[tuple, dict[int, int]] = {}
        self.ye: dict[tuple, dict[int, int]] = {}
        cap_rows: dict[int, dict[int, float]] = defaultdict(dict)
        for d in demands:
            k = d.key
            ya = {a.id: m.add_var(f"ya[{k}][{a.id}]", 0, 1, d.gbps) for a in net.arcs}
            ye = {a.id: m.add_var(f"ye[{k}][{a.id}]", 0, 1, d.gbps) for a in net.arcs}
            self.ya[k] = ya
            self.ye[k] = ye
            for a in net.arcs:
                cap_rows[a.id][ya[a.id]] = d.gbps
                cap_rows[a.id][ye[a.id]] = d.gbps
            s, t = d.src, d.dst
            row = {ya[a]: 1 for a in net.out_arcs(s)}
            if s in self.nfv_set:
                row.update(first_term(d, s))
            m.add_row(_seg_rows("src", k), row, EQ, 1)
            for v in range(net.num_nodes):
                if v == s:
                    continue
                flow = {ya[a]: 1 for a in net.out_arcs(v)}
                for a in net.in_arcs(v):
                    flow[ya[a]] = -1
                if v in self.nfv_set:
                    term = first_term(d, v)
                    row = {ya[a]: -1 for a in net.in_arcs(v)}
                    row.update(term)
                    m.add_row(_seg_rows("srcin", k) + f"[{v}]", row, LE, 0)
                    flow.update(term)
                m.add_row(_seg_rows("srcflow", k) + f"[{v}]", flow, EQ, 0)
            row = {ye[a]: 1 for a in net.in_arcs(t)}
            if t in self.nfv_set:
                row.update(last_term(d, t))
            m.add_row(_seg_rows("dst", k), row, EQ, 1)
            for v in range(net.num_nodes):
                if v == t:
                    continue
                flow = {ye[a]: 1 for a in net.in_arcs(v)}
                for a in net.out_arcs(v):
                    flow[ye[a]] = -1
                if v in self.nfv_set:
                    term = last_term(d, v)
                    row = {ye[a]: -1 for a in net.out_arcs(v)}
                    row.update(term)
                    m.add_row(_seg_rows("dstout", k) + f"[{v}]", row, LE, 0)
                    flow.update(term)
                m.add_row(_seg_rows("dstflow", k) + f"[{v}]", flow, EQ, 0)
        for a in net.arcs:
            m.add_row(f"cap[{a.id}]", cap_rows[a.id], LE, a.capacity)

    # -- columns ------------------------------------------------------------

    def _resource_coeffs(self, cfg: Configuration, chain: ChainSpec) -> dict[str, float]:
        col: dict[str, float] = defaultdict(float)
        for v, c in cfg.cores(chain, self.scenario.vnfs).items():
            col[f"core[{v}]"] += c
        for a, mult in cfg.arc_multiplicity().items():
            col[f"cap[{a}]"] += cfg.load * mult
        return col

    def has_column(self, cfg: Configuration) -> bool:
        return cfg.key in self._keys

    def add_configuration(self, cfg: Configuration) -> int | None:
        """Add ``cfg`` as a new z-column; returns its var index or None if already present."""
        if cfg.key in self._keys:
            return None
        unit = self.unit_of(cfg)
        coeffs = self.column_coefficients(cfg)
        j = self.model.add_column(f"z[{len(self.columns)}:{unit}]", cfg.cost, coeffs, 0, 1)
        self._keys.add(cfg.key)
        self.columns.append(cfg)
        self.column_var.append(j)
        self.column_unit.append(unit)
        return j

    def reduced_cost(self, cfg: Configuration, duals: dict[str, float]) -> float:
        """Reduced cost of a (possibly not yet added) configuration under ``duals``."""
        coeffs = self.column_coefficients(cfg)
        return cfg.cost - sum(duals.get(r, 0.0) * a for r, a in coeffs.items())

    # -- solving ------------------------------------------------------------

    def solve_relaxation(self) -> LpSolution:
        return solve_lp(self.model)

    def integer_model(self) -> LpModel:
        m = self.model.copy()
        m.name = self.model.name + "-ilp"
        for j in self.column_var:
            m.integer[j] = True
        for j in list(self.x_vf.values()) + list(self.h_v.values()):
            m.integer[j] = True
        for table in (self.ya, self.ye):
            for vars_ in table.values():
                for j in vars_.values():
                    m.integer[j] = True
        for j in self.artificial_vars:
            m.set_bounds(j, 0, 0)
        return m

    def solve_integer(self, time_limit: float | None = None, gap_tol: float = 1e-6) -> LpSolution:
        return solve_milp(self.integer_model(), time_limit=time_limit, gap_tol=gap_tol)

    def artificial_in_use(self, sol: LpSolution, tol: float = 1e-7) -> bool:
        return any(sol.x[j] > tol for j in self.artificial_vars)

    def _routes(self, sol: LpSolution, demand: Demand, first: int, last: int):
        x = sol.x
        acc = [a for a, j in self.ya[demand.key].items() if x[j] > 0.5]
        egr = [a for a, j in self.ye[demand.key].items() if x[j] > 0.5]
        return self._order(demand.src, first, acc), self._order(last, demand.dst, egr)

    def _order(self, start: int, target: int, arcs: list[int]) -> tuple[int, ...]:
        walk = trace_walk(self.net, start, target, arcs)
        if walk is not None:
            return walk
        # support contains a detour; take a shortest path inside it
        from collections import deque

        allowed = set(arcs)
        prev = {start: None}
        q = deque([start])
        while q:
            v = q.popleft()
            if v == target:
                break
            for a in sorted(self.net.out_arcs(v)):
                if a in allowed and self.net.arcs[a].head not in prev:
                    prev[self.net.arcs[a].head] = a
                    q.append(self.net.arcs[a].head)
        if target not in prev:
            raise RuntimeError(f"route {start}->{target} missing from solution support")
        path = []
        v = target
        while prev[v] is not None:
            a = prev[v]
            path.append(a)
            v = self.net.arcs[a].tail
        return tuple(reversed(path))

    def diagnose_infeasibility(self, time_limit: float | None = None) -> list[str]:
        """Constraint families whose removal makes the integer master feasible."""
        families = {
            "nfv-node-budget": lambda m: _relax_rows(m, ["K"]),
            "vnf-replicas": lambda m: _relax_rows(m, [r for r in m.row_names if r.startswith("rep[")]),
            "node-cores": lambda m: _relax_rows(m, [r for r in m.row_names if r.startswith("core[")]),
            "link-capacity": lambda m: _relax_rows(m, [r for r in m.row_names if r.startswith("cap[")]),
        }
        binding = []
        for name, relax in families.items():
            m = self.integer_model()
            relax(m)
            sol = solve_milp(m, time_limit=time_limit, gap_tol=1e-3)
            if sol.has_solution:
                binding.append(name)
        return binding or ["coverage"]


def _relax_rows(m: LpModel, rows: list[str]) -> None:
    for r in rows:
        m.rhs[m.row_index[r]] = 1e18


class FlowMaster(_MasterBase):
    """Configurations carry attached flow sets; one master per scenario."""

    def __init__(self, scenario: Scenario, K: int, budgets: dict[str, int] | None = None, *,
                 artificial: bool = True):
        super().__init__(scenario, K, artificial=artificial, strengthen=False)
        self.budgets = budgets or {c.id: c.instances for c in scenario.chains}
        self.units = {c.id: Unit(c.id, c, scenario.demands.for_chain(c.id)) for c in scenario.active_chains}
        m = self.model
        self._build_resources()
        for cid in self.units:
            m.add_row(f"inst[{cid}]", {}, LE, self.budgets[cid])
        # Eq. 4/5 style presence rows: configurations count placements directly
        bigm = sum(self.budgets[c] * u.chain.length for c, u in self.units.items())
        self.presence_bigm = bigm
        for v in self.nfv:
            for f in self.vnfs:
                m.add_row(f"xub[{v},{f}]", {self.x_vf[v, f]: -bigm}, LE, 0)
                m.add_row(f"xlb[{v},{f}]", {self.x_vf[v, f]: -1}, GE, 0)
        for d in scenario.demands:
            m.add_row(_seg_rows("assign", d.key), {}, EQ, 1)
        self._build_routing(scenario.demands, lambda d, v: {}, lambda d, v: {})
        if artificial:
            for d in scenario.demands:
                k = d.key
                j = m.add_column(f"art[{k}]", self.penalty,
                                 {_seg_rows("assign", k): 1, _seg_rows("src", k): 1, _seg_rows("dst", k): 1})
                self.artificial_vars.append(j)

    def unit_of(self, cfg: Configuration) -> str:
        return cfg.chain_id

    def column_coefficients(self, cfg: Configuration) -> dict[str, float]:
        chain = self.units[cfg.chain_id].chain
        col = self._resource_coeffs(cfg, chain)
        col[f"inst[{cfg.chain_id}]"] += 1
        for v, f in zip(cfg.placement, chain.vnfs):
            col[f"xub[{v},{f}]"] += 1
            col[f"xlb[{v},{f}]"] += 1
        first, last = cfg.first, cfg.last
        for s, t in cfg.flows:
            k = (cfg.chain_id, s, t)
            col[_seg_rows("assign", k)] += 1
            if first == s:
                col[_seg_rows("src", k)] += 1
            else:
                col[_seg_rows("srcin", k) + f"[{first}]"] += 1
                col[_seg_rows("srcflow", k) + f"[{first}]"] += 1
            if last == t:
                col[_seg_rows("dst", k)] += 1
            else:
                col[_seg_rows("dstout", k) + f"[{last}]"] += 1
                col[_seg_rows("dstflow", k) + f"[{last}]"] += 1
        return dict(col)

    def extract(self, sol: LpSolution, **meta) -> MappingSolution:
        x = sol.x
        chosen = [i for i, j in enumerate(self.column_var) if x[j] > 0.5]
        configs = [self.columns[i] for i in chosen]
        assignment, access, egress = {}, {}, {}
        for pos, cfg in enumerate(configs):
            for s, t in sorted(cfg.flows):
                k = (cfg.chain_id, s, t)
                if k in assignment:
                    raise RuntimeError(f"demand {k} attached to two selected configurations")
                assignment[k] = pos
        for d in self.scenario.demands:
            cfg = configs[assignment[d.key]]
            access[d.key], egress[d.key] = self._routes(sol, d, cfg.first, cfg.last)
        return assemble(self.scenario, configs, assignment, access, egress,
                        solver_objective=sol.objective, budgets=dict(self.budgets), **meta)


class GroupMaster(_MasterBase):
    """One single-instance pseudo-chain per traffic group (two-phase model)."""

    def __init__(self, scenario: Scenario, K: int, groups: Sequence[Unit], *, artificial: bool = True,
                 strengthen: bool = True):
        super().__init__(scenario, K, artificial=artificial, strengthen=strengthen)
        self.units = {u.id: u for u in groups}
        self.unit_of_demand = {d.key: u.id for u in groups for d in u.demands}
        missing = [d.key for d in scenario.demands if d.key not in self.unit_of_demand]
        if missing:
            raise ValueError(f"demands not covered by any group: {missing[:3]}")
        m = self.model
        self._build_resources()
        self.xg: dict[tuple[str, int, int], int] = {}
        for u in groups:
            m.add_row(f"one[{u.id}]", {}, EQ, 1)
            for i in range(u.chain.length):
                for v in self.nfv:
                    j = m.add_var(f"xg[{u.id},{i},{v}]", 0, 1)
                    self.xg[u.id, i, v] = j
                    m.add_row(f"cons[{u.id},{i},{v}]", {j: -1}, EQ, 0)
        # aggregated presence rows, plus the disaggregated strengthening
        uses: dict[str, list[tuple[str, int]]] = defaultdict(list)
        for u in groups:
            for i, f in enumerate(u.chain.vnfs):
                uses[f].append((u.id, i))
        for v in self.nfv:
            for f in self.vnfs:
                terms = {self.xg[g, i, v]: 1 for g, i in uses[f]}
                bigm = max(1, len(uses[f]))
                m.add_row(f"xub[{v},{f}]", {**terms, self.x_vf[v, f]: -bigm}, LE, 0)
                m.add_row(f"xlb[{v},{f}]", {**terms, self.x_vf[v, f]: -1}, GE, 0)
                if self.strengthen:
                    for g, i in uses[f]:
                        m.add_row(f"xgf[{g},{i},{v},{f}]", {self.xg[g, i, v]: 1, self.x_vf[v, f]: -1}, LE, 0)

        def first(d, v):
            return {self.xg[self.unit_of_demand[d.key], 0, v]: 1}

        def last(d, v):
            u = self.units[self.unit_of_demand[d.key]]
            return {self.xg[u.id, u.chain.length - 1, v]: 1}

        all_demands = [d for u in groups for d in u.demands]
        self._build_routing(all_demands, first, last)
        if artificial:
            for u in groups:
                col = {f"one[{u.id}]": 1}
                for d in u.demands:
                    col[_seg_rows("src", d.key)] = 1
                    col[_seg_rows("dst", d.key)] = 1
                j = m.add_column(f"art[{u.id}]", self.penalty, col)
                self.artificial_vars.append(j)

    def unit_of(self, cfg: Configuration) -> str:
        return cfg.group

    def column_coefficients(self, cfg: Configuration) -> dict[str, float]:
        u = self.units[cfg.group]
        col = self._resource_coeffs(cfg, u.chain)
        col[f"one[{u.id}]"] += 1
        for i, v in enumerate(cfg.placement):
            col[f"cons[{u.id},{i},{v}]"] += 1
        return dict(col)

    def extract(self, sol: LpSolution, **meta) -> MappingSolution:
        x = sol.x
        configs = []
        assignment, access, egress = {}, {}, {}
        chosen = {}
        for i, j in enumerate(self.column_var):
            if x[j] > 0.5:
                g = self.column_unit[i]
                if g in chosen:
                    raise RuntimeError(f"group {g} has two selected configurations")
                chosen[g] = i
        for g, u in self.units.items():
            cfg = self.columns[chosen[g]]
            pos = len(configs)
            configs.append(cfg)
            for d in u.demands:
                assignment[d.key] = pos
                access[d.key], egress[d.key] = self._routes(sol, d, cfg.first, cfg.last)
        return assemble(self.scenario, configs, assignment, access, egress,
                        solver_objective=sol.objective, **meta)


def colocated_configuration(unit: Unit, v: int, *, flows: Iterable[tuple[int, int]] = (), group: str | None = None) -> Configuration:
    n = unit.chain.length
    return Configuration(unit.chain.id, (v,) * n, ((),) * (n - 1), unit.load, frozenset(flows), group)


def reachable_colocation_nodes(unit: Unit, nfv: Sequence[int], hops: HopTable) -> list[int]:
    return [v for v in nfv if all(hops.reachable(d.src, v) and hops.reachable(v, d.dst) for d in unit.demands)]


def best_colocation_node(unit: Unit, nfv: Sequence[int], hops: HopTable) -> int:
    """NFV node minimising sum D * (dist(s, v) + dist(v, d)) over the unit's demands."""
    candidates = reachable_colocation_nodes(unit, nfv, hops)
    if not candidates:
        raise ValueError(f"no NFV node reachable by every demand of {unit.id}")
    return min(candidates, key=lambda v: (sum(d.gbps * (hops.dist[d.src, v] + hops.dist[v, d.dst]) for d in unit.demands), v))


def lp_values(sol: LpSolution, idx: Iterable[int]) -> np.ndarray:
    return np.array([sol.x[j] for j in idx])
