"""Two-phase model: shortest-path traffic grouping, then linear column generation.

Phase 1 (SPTG) splits each chain's demands into at most N_c groups of pairs
whose shortest paths share links, biggest flows first. Phase 2 treats each
group as its own single-instance chain, so a configuration is just a VNF
placement plus inter-VNF paths and the pricing problem stays linear.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cg_quadratic import CgTraceRow, DEFAULT_EPS, PRICING_TIME_LIMIT, write_trace
from .master import (GroupMaster, InfeasibleModelError, Unit, colocated_configuration,
                     reachable_colocation_nodes)
from .milp import EQ, LE, LIMIT, LpModel, solve_milp
from .network import ChainSpec, Demand, NetworkModel, Scenario
from .paths import HopTable, pred_path, weighted_all_pairs
from .solution import Configuration, MappingSolution

log = logging.getLogger(__name__)

Pair = tuple[int, int]


# --- phase 1 ------------------------------------------------------------------


@dataclass
class TrafficPartition:
    chain_id: str
    groups: list[tuple[Pair, ...]]
    N_c: int
    anchors: list[Pair] = field(default_factory=list)

    def check(self, pairs: Iterable[Pair]) -> None:
        pairs = set(pairs)
        seen: set[Pair] = set()
        for g in self.groups:
            if not g:
                raise ValueError("empty group")
            if seen & set(g):
                raise ValueError("groups overlap")
            seen |= set(g)
        if seen != pairs:
            raise ValueError("groups do not cover the demand set")
        if not 1 <= len(self.groups) <= self.N_c:
            raise ValueError(f"{len(self.groups)} groups for N_c={self.N_c}")

    def to_dict(self) -> dict:
        return {"chain": self.chain_id, "N_c": self.N_c,
                "groups": [[list(p) for p in g] for g in self.groups],
                "anchors": [list(a) for a in self.anchors]}


CLUSTER_RULES = ("shared-link", "endpoints")


def sptg(net: NetworkModel, chain: ChainSpec, demands: Sequence[Demand], N_c: int,
         hops: HopTable | None = None, cluster_rule: str = "shared-link") -> TrafficPartition:
    """Group the chain's demand pairs into min(N_c, |SD_c|) groups.

    ``cluster_rule`` decides which pairs an anchor pair (s, d) attracts:
    ``"shared-link"`` takes pairs whose canonical shortest path shares at
    least one arc with the anchor's; ``"endpoints"`` takes pairs whose
    canonical shortest path visits both s and d.
    """
    if N_c < 1:
        raise ValueError("N_c must be >= 1")
    if cluster_rule not in CLUSTER_RULES:
        raise ValueError(f"unknown cluster rule {cluster_rule!r}")
    own = sorted((d for d in demands if d.chain == chain.id), key=lambda d: d.pair)
    if not own:
        raise ValueError(f"chain {chain.id} has no demands")
    hops = hops or HopTable(net)
    pairs = [d.pair for d in own]
    gbps = np.array([d.gbps for d in own])
    n = len(pairs)
    if cluster_rule == "shared-link":
        arcsets = [set(hops.arc_path(s, t)) for s, t in pairs]
        overlap = np.array([[bool(arcsets[i] & arcsets[j]) for j in range(n)] for i in range(n)])
    else:
        nodesets = [set(hops.node_path(s, t)) for s, t in pairs]
        overlap = np.array([[pairs[i][0] in nodesets[j] and pairs[i][1] in nodesets[j] for j in range(n)]
                            for i in range(n)])

    left = np.ones(n, dtype=bool)
    groups: list[list[int]] = []
    anchors: list[int] = []

    def biggest(mask):
        idx = np.flatnonzero(mask)
        # largest demand, then lexicographically smallest pair (pairs are sorted)
        return int(idx[np.argmax(gbps[idx])])

    while len(groups) < N_c and left.any():
        big = biggest(left)
        best = None
        for anchor in range(n):
            members = overlap[anchor] & left
            if not members[big]:
                continue
            score = (int(members.sum()), float(gbps[members].sum()))
            if best is None or score > best[0]:
                best = (score, anchor, members)
        _, anchor, members = best
        groups.append(list(np.flatnonzero(members)))
        anchors.append(anchor)
        left &= ~members

    # leftovers go to the group whose anchor path offers the shortest detour
    for p in np.flatnonzero(left):
        s, t = pairs[p]

        def detour(g):
            route = hops.node_path(*pairs[anchors[g]])
            return min(hops.dist[s, w] + hops.dist[w, t] for w in route if hops.reachable(s, w) and hops.reachable(w, t))

        costs = [detour(g) for g in range(len(groups))]
        groups[int(np.argmin(costs))].append(int(p))

    target = min(N_c, n)
    while len(groups) < target:
        candidates = [g for g in range(len(groups)) if len(groups[g]) >= 2]
        g = max(candidates, key=lambda g: (gbps[groups[g]].sum(), -g))
        smallest = min(groups[g], key=lambda i: (gbps[i], i))
        groups[g].remove(smallest)
        groups.append([smallest])
        anchors.append(smallest)

    out = TrafficPartition(chain.id, [tuple(pairs[i] for i in sorted(g)) for g in groups], N_c,
                           [pairs[a] for a in anchors])
    out.check(pairs)
    return out


def partition_units(scenario: Scenario, partitions: Mapping[str, TrafficPartition]) -> list[Unit]:
    units = []
    by_key = scenario.demands.by_key()
    for chain in scenario.active_chains:
        part = partitions[chain.id]
        for gi, group in enumerate(part.groups):
            members = tuple(by_key[(chain.id, s, t)] for s, t in group)
            units.append(Unit(f"{chain.id}#{gi}", chain, members))
    return units


# --- phase 2 pricing -------------------------------------------------------------


@dataclass
class GroupPricing:
    unit: str
    configuration: Configuration | None
    red_cost: float
    method: str  # "dp" or "milp"
    limited: bool = False


def _node_weights(master: GroupMaster, unit: Unit, duals: Mapping[str, float]) -> np.ndarray:
    """Dual cost of putting position i on NFV node v (rows: positions, cols: master.nfv)."""
    L = unit.load
    nw = np.zeros((unit.chain.length, len(master.nfv)))
    for i, f in enumerate(unit.chain.vnfs):
        cores = master.scenario.vnfs[f].cores_for(L)
        for k, v in enumerate(master.nfv):
            nw[i, k] = -duals.get(f"cons[{unit.id},{i},{v}]", 0.0) - duals.get(f"core[{v}]", 0.0) * cores
    return nw


def arc_weights(master: GroupMaster, duals: Mapping[str, float]) -> np.ndarray:
    """Per-Gbps price of an inter-VNF arc: one hop plus the capacity dual."""
    return np.array([1.0 - duals.get(f"cap[{a.id}]", 0.0) for a in master.net.arcs])


def build_group_pricing_model(master: GroupMaster, unit: Unit, duals: Mapping[str, float]):
    """Linear pricing model for one group: placement a[v,i] and arcs b[i,l] only."""
    net = master.net
    n = unit.chain.length
    L = unit.load
    nw = _node_weights(master, unit, duals)
    w = arc_weights(master, duals)
    m = LpModel(f"pricing-{unit.id}")
    m.obj_offset = -duals.get(f"one[{unit.id}]", 0.0)
    a = {(v, i): m.add_var(f"a[{v},{i}]", 0, 1, nw[i, k], integer=True)
         for i in range(n) for k, v in enumerate(master.nfv)}
    b = {(i, l.id): m.add_var(f"b[{i},{l.id}]", 0, 1, L * w[l.id], integer=True)
         for i in range(n - 1) for l in net.arcs}
    for i in range(n):
        m.add_row(f"place[{i}]", {a[v, i]: 1 for v in master.nfv}, EQ, 1)
    for i in range(n - 1):
        for v in range(net.num_nodes):
            row = {b[i, l]: 1 for l in net.out_arcs(v)}
            for l in net.in_arcs(v):
                row[b[i, l]] = -1
            if v in master.nfv_set:
                row[a[v, i]] = -1
                row[a[v, i + 1]] = row.get(a[v, i + 1], 0) + 1
            m.add_row(f"seg[{i},{v}]", row, EQ, 0)
            m.add_row(f"segin[{i},{v}]", {b[i, l]: 1 for l in net.in_arcs(v)}, LE, 1)
    for v in master.nfv:
        row = {a[v, i]: master.scenario.vnfs[f].cores_for(L) for i, f in enumerate(unit.chain.vnfs)}
        m.add_row(f"cores[{v}]", row, LE, net.nodes[v].cores)
    if n > 1:
        for l in net.arcs:
            m.add_row(f"capb[{l.id}]", {b[i, l.id]: L for i in range(n - 1)}, LE, l.capacity)
    return m, a, b


def _fits(master: GroupMaster, unit: Unit, cfg: Configuration) -> bool:
    net = master.net
    for v, c in cfg.cores(unit.chain, master.scenario.vnfs).items():
        if c > net.nodes[v].cores:
            return False
    return all(cfg.load * k <= net.arcs[a].capacity + 1e-9 for a, k in cfg.arc_multiplicity().items())


def price_group(master: GroupMaster, unit: Unit, duals: Mapping[str, float], dist: np.ndarray, pred: np.ndarray,
                time_limit: float | None = PRICING_TIME_LIMIT) -> GroupPricing:
    """Cheapest configuration for ``unit`` under ``duals``.

    A layered shortest-path DP is exact while the configuration respects the
    per-node core and per-arc capacity limits on its own; otherwise the
    linear pricing MILP decides.
    """
    nfv = master.nfv
    L = unit.load
    n = unit.chain.length
    nw = _node_weights(master, unit, duals)
    seg = L * dist[np.ix_(nfv, nfv)]
    cost = nw[0].copy()
    back = []
    for i in range(1, n):
        total = cost[:, None] + seg
        arg = np.argmin(total, axis=0)
        back.append(arg)
        cost = total[arg, np.arange(len(nfv))] + nw[i]
    end = int(np.argmin(cost))
    idx = [end]
    for arg in reversed(back):
        idx.append(int(arg[idx[-1]]))
    placement = tuple(nfv[k] for k in reversed(idx))
    segs = tuple(pred_path(master.net, pred, u, v) for u, v in zip(placement, placement[1:]))
    cfg = Configuration(unit.chain.id, placement, segs, L, group=unit.id)
    if _fits(master, unit, cfg):
        rc = master.reduced_cost(cfg, duals)
        return GroupPricing(unit.id, cfg, rc, "dp")
    m, a, b = build_group_pricing_model(master, unit, duals)
    sol = solve_milp(m, time_limit=time_limit)
    if not sol.has_solution:
        return GroupPricing(unit.id, None, math.inf, "milp", sol.status == LIMIT)
    x = sol.x
    placement = tuple(next(v for v in nfv if x[a[v, i]] > 0.5) for i in range(n))
    segs = []
    for i in range(n - 1):
        arcs = [l for (ii, l), j in b.items() if ii == i and x[j] > 0.5]
        segs.append(master._order(placement[i], placement[i + 1], arcs) if arcs else ())
    cfg = Configuration(unit.chain.id, placement, tuple(segs), L, group=unit.id)
    return GroupPricing(unit.id, cfg, master.reduced_cost(cfg, duals), "milp", sol.status == LIMIT)


def _lagrangian_bound(master: GroupMaster, duals: np.ndarray, found: Sequence[GroupPricing]) -> float:
    """Lower bound on the full master LP from any sign-feasible dual vector.

    Uses pi.b, the best bound term of every non-configuration variable, and
    for each group the cheapest configuration (one per group is selected).
    """
    m = master.model
    a = m.matrix()
    rc = np.asarray(m.obj) - a.T @ duals
    lb = np.asarray(m.lb)
    ub = np.asarray(m.ub)
    is_col = np.zeros(m.num_vars, dtype=bool)
    is_col[master.column_var] = True
    rcn = rc[~is_col]
    with np.errstate(invalid="ignore"):
        beta = np.where(rcn >= 0, rcn * lb[~is_col], rcn * ub[~is_col])
    if not np.all(np.isfinite(beta)):
        return -math.inf
    total = float(np.dot(duals, m.rhs)) + float(beta.sum()) + m.obj_offset
    per_group = {u: math.inf for u in master.units}
    for j, u in zip(master.column_var, master.column_unit):
        per_group[u] = min(per_group[u], rc[j])
    for p in found:
        per_group[p.unit] = min(per_group[p.unit], p.red_cost)
    return total + sum(per_group.values())


# --- phase 2 driver ---------------------------------------------------------------


@dataclass
class TwoPhaseResult:
    solution: MappingSolution
    partitions: dict[str, TrafficPartition]
    trace: list[CgTraceRow] = field(default_factory=list)
    lp_objective: float = math.nan
    status: str = "optimal"
    pool: list[Configuration] = field(default_factory=list)

    def write_trace(self, path) -> None:
        write_trace(path, self.trace)

    def write_partition(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([self.partitions[c].to_dict() for c in sorted(self.partitions)], fh, indent=1)


def group_seeds(scenario: Scenario, units: Sequence[Unit], hops: HopTable) -> list[Configuration]:
    """Every group co-located on every NFV node all its flows can reach."""
    out = []
    for u in units:
        for v in reachable_colocation_nodes(u, scenario.net.nfv_nodes, hops):
            out.append(colocated_configuration(u, v, group=u.id))
    return out


def solve_phase2(scenario: Scenario, partitions: Mapping[str, TrafficPartition], K: int, *,
                 eps: float = DEFAULT_EPS, max_rounds: int = 1000, time_limit: float | None = None,
                 pricing_time_limit: float | None = PRICING_TIME_LIMIT, ilp_time_limit: float | None = None,
                 pool: Iterable[Configuration] = (), strengthen: bool = True,
                 smoothing: float = 0.5, stall_smoothing: float = 0.85, stall_rounds: int = 3) -> TwoPhaseResult:
    """Column generation over the groups, then the final restricted master as an ILP.

    Pricing runs at a smoothed dual point (a convex combination of the
    master's duals and the duals that gave the best Lagrangian bound so far)
    to damp the oscillation of degenerate masters; the loop also stops once
    that bound certifies the master's LP value within ``eps`` relative.
    After ``stall_rounds`` rounds without LP progress the weight on the
    best-bound duals rises to ``stall_smoothing``, which mostly matters when
    the seeds already hold an optimal LP basis (K = 1).

    ``pool`` may carry configurations from an earlier run on the same groups
    (e.g. the previous point of a K or R sweep); those whose group is absent
    are ignored.
    """
    t0 = time.perf_counter()
    units = partition_units(scenario, partitions)
    master = GroupMaster(scenario, K, units, strengthen=strengthen)
    for cfg in group_seeds(scenario, units, master.hops):
        master.add_configuration(cfg)
    for cfg in pool:
        if cfg.group in master.units:
            master.add_configuration(cfg)
    trace: list[CgTraceRow] = []
    status = "optimal"
    lp = master.solve_relaxation()
    if not lp.optimal:
        raise RuntimeError(f"restricted master LP failed: {lp.status} {lp.message}")
    model = master.model
    rounds = 0
    pricing_calls = 0
    best_bound = -math.inf
    center: np.ndarray | None = None
    stalled = 0
    while True:
        if rounds >= max_rounds:
            status = "iteration-limit"
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            status = "time-limit"
            break
        rounds += 1
        current = np.array([lp.duals[r] for r in model.row_names])
        alpha = 0.0
        if center is not None:
            alpha = max(smoothing, stall_smoothing) if stalled >= stall_rounds else smoothing
        added = 0
        best_rc = math.inf
        while True:
            point = current if alpha == 0.0 else alpha * center + (1 - alpha) * current
            duals = dict(zip(model.row_names, point.tolist()))
            dist, pred = weighted_all_pairs(master.net, arc_weights(master, duals))
            found = []
            exact = True
            for u in units:
                priced = price_group(master, u, duals, dist, pred, pricing_time_limit)
                pricing_calls += 1
                if priced.limited:
                    status = "pricing-limited"
                    exact = False
                found.append(priced)
            bound = _lagrangian_bound(master, point, found) if exact else -math.inf
            if bound > best_bound:
                best_bound, center = bound, point
            for priced in found:
                if priced.configuration is None:
                    continue
                rc = master.reduced_cost(priced.configuration, lp.duals)
                best_rc = min(best_rc, rc)
                if rc < -eps and master.add_configuration(priced.configuration) is not None:
                    added += 1
            if added or alpha == 0.0:
                break
            alpha = 0.0  # mispricing: retry at the master's own duals
        converged = lp.objective - best_bound <= eps * max(1.0, abs(lp.objective))
        if added and not converged:
            previous = lp.objective
            lp = master.solve_relaxation()
            if not lp.optimal:
                raise RuntimeError(f"restricted master LP failed: {lp.status} {lp.message}")
            stalled = stalled + 1 if lp.objective >= previous - 1e-9 * max(1.0, abs(previous)) else 0
        trace.append(CgTraceRow(rounds, "*", best_rc, lp.objective, len(master.columns)))
        if not added or converged:
            break
    lp_obj = lp.objective
    sol = master.solve_integer(time_limit=ilp_time_limit)
    if not sol.has_solution:
        if sol.status == LIMIT:
            raise TimeoutError("two-phase: final ILP hit its time limit without an incumbent")
        raise InfeasibleModelError("two-phase: final ILP infeasible", master.diagnose_infeasibility(ilp_time_limit))
    if sol.status == LIMIT and status == "optimal":
        status = "ilp-time-limit"
    out = master.extract(sol, method="two-phase", status=status, lp_objective=lp_obj,
                         budgets={c: len(p.groups) for c, p in partitions.items()})
    out.runtime = time.perf_counter() - t0
    out.meta.update(rounds=rounds, pricing_calls=pricing_calls, columns=len(master.columns), eps=eps, K=K,
                    groups={c: len(p.groups) for c, p in partitions.items()},
                    artificial_in_lp=master.artificial_in_use(lp))
    return TwoPhaseResult(out, dict(partitions), trace, lp_obj, status, list(master.columns))


def run_two_phase(scenario: Scenario, groups: Mapping[str, int] | int, K: int, *,
                  cluster_rule: str = "shared-link", **kw) -> TwoPhaseResult:
    """SPTG per chain with the requested group counts, then phase 2."""
    hops = HopTable(scenario.net)
    hops.require(d.pair for d in scenario.demands)
    if isinstance(groups, int):
        groups = {c.id: groups for c in scenario.active_chains}
    partitions = {}
    for chain in scenario.active_chains:
        partitions[chain.id] = sptg(scenario.net, chain, scenario.demands, groups.get(chain.id, chain.instances), hops,
                                      cluster_rule)
    return solve_phase2(scenario, partitions, K, **kw)
