"""All-shortest-path lower bound and an exhaustive oracle for tiny instances."""

from __future__ import annotations

import itertools
import math
import time
from collections import defaultdict
from dataclasses import dataclass

from .enum_ilp import _placement_routes
from .master import InfeasibleModelError
from .network import Demand, NetworkModel, Scenario
from .paths import HopTable, PathCache, all_simple_paths
from .solution import Configuration, MappingSolution, assemble


class SearchSpaceError(RuntimeError):
    pass


@dataclass
class AspResult:
    value: float
    paths: dict[tuple[str, int, int], tuple[int, ...]]


def asp_bandwidth(net: NetworkModel, demands) -> AspResult:
    """Bandwidth if every flow rode its own hop-shortest path (no placement constraints)."""
    hops = HopTable(net)
    hops.require(d.pair for d in demands)
    value = 0.0
    paths = {}
    for d in demands:
        value += d.gbps * hops.hops(d.src, d.dst)
        paths[d.key] = hops.arc_path(d.src, d.dst)
    return AspResult(value, paths)


def set_partitions(items, max_blocks):
    """Partitions of ``items`` into at most ``max_blocks`` non-empty blocks."""
    items = list(items)
    if not items:
        yield []
        return

    def rec(i, blocks):
        if i == len(items):
            yield [list(b) for b in blocks]
            return
        for b in blocks:
            b.append(items[i])
            yield from rec(i + 1, blocks)
            b.pop()
        if len(blocks) < max_blocks:
            blocks.append([items[i]])
            yield from rec(i + 1, blocks)
            blocks.pop()

    yield from rec(0, [])


def brute_force_opt(scenario: Scenario, K: int, p_paths: int = 2, budgets: dict[str, int] | None = None,
                    max_states: int = 10**7) -> MappingSolution:
    """Globally optimal mapping by depth-first search with bound pruning.

    Searches every grouping of each chain's demands into at most I_c
    instances, every placement and inter-VNF path choice (``p_paths``
    shortest), and every loopless access/egress route, under the NFV node
    budget, replica limits, node cores and link capacities.
    """
    t0 = time.perf_counter()
    net = scenario.net
    hops = HopTable(net)
    hops.require(d.pair for d in scenario.demands)
    budgets = budgets or {c.id: c.instances for c in scenario.chains}
    paths = PathCache(net, p_paths)
    vnfs = scenario.vnfs

    options = {}
    for chain in scenario.active_chains:
        opts = []
        for placement, routes in _placement_routes(chain, net, paths):
            for segs in itertools.product(*routes):
                mult = defaultdict(int)
                for seg in segs:
                    for a in seg:
                        mult[a] += 1
                opts.append((placement, segs, sum(len(s) for s in segs), dict(mult)))
        options[chain.id] = opts

    route_cache: dict[tuple[int, int], list[tuple[int, ...]]] = {}

    def routes(s, t):
        if (s, t) not in route_cache:
            route_cache[s, t] = all_simple_paths(net, s, t)
        return route_cache[s, t]

    def dist(s, t):
        return int(hops.dist[s, t])

    partitions_per_chain = []
    for chain in scenario.active_chains:
        own = sorted(scenario.demands.for_chain(chain.id), key=lambda d: d.pair)
        partitions_per_chain.append([(chain, [tuple(b) for b in p]) for p in set_partitions(own, budgets[chain.id])])

    best = {"cost": math.inf, "plan": None}
    states = 0
    cap = [a.capacity for a in net.arcs]
    node_cores = [n.cores for n in net.nodes]
    eps = 1e-9

    def tick():
        nonlocal states
        states += 1
        if states > max_states:
            raise SearchSpaceError(f"brute force exceeded {max_states} states")

    def route_demands(items, i, cost, load, plan_routes, lb_rest):
        tick()
        if cost + lb_rest >= best["cost"] - eps:
            return
        if i == len(items):
            best["cost"] = cost
            best["plan"] = (list(chosen), dict(plan_routes))
            return
        d, cfg_first, cfg_last = items[i]
        own_lb = d.gbps * (dist(d.src, cfg_first) + dist(cfg_last, d.dst))
        rest = lb_rest - own_lb
        for acc in routes(d.src, cfg_first):
            bump_a = [(a, d.gbps) for a in acc]
            if any(load[a] + g > cap[a] + eps for a, g in bump_a):
                continue
            for a, g in bump_a:
                load[a] += g
            for egr in routes(cfg_last, d.dst):
                c = cost + d.gbps * (len(acc) + len(egr))
                if c + rest >= best["cost"] - eps:
                    break  # egress routes are sorted by length
                if any(load[a] + d.gbps > cap[a] + eps for a in egr):
                    continue
                for a in egr:
                    load[a] += d.gbps
                plan_routes[d.key] = (acc, egr)
                route_demands(items, i + 1, c, load, plan_routes, rest)
                for a in egr:
                    load[a] -= d.gbps
            for a, g in bump_a:
                load[a] -= g
        plan_routes.pop(d.key, None)

    chosen: list[tuple] = []

    def assign(blocks, bi, cost, load, cores, hosts, vnf_nodes, lb_rest):
        tick()
        if cost + lb_rest >= best["cost"] - eps:
            return
        if bi == len(blocks):
            items = []
            rest = 0.0
            for chain, block, (placement, *_rest) in chosen:
                for d in block:
                    items.append((d, placement[0], placement[-1]))
                    rest += d.gbps * (dist(d.src, placement[0]) + dist(placement[-1], d.dst))
            route_demands(items, 0, cost, load, {}, rest)
            return
        chain, block = blocks[bi]
        block_load = sum(d.gbps for d in block)
        block_asp = sum(d.gbps * dist(d.src, d.dst) for d in block)
        scored = []
        for placement, segs, nh, mult in options[chain.id]:
            if any(not hops.reachable(d.src, placement[0]) or not hops.reachable(placement[-1], d.dst) for d in block):
                continue
            lb = block_load * nh + sum(d.gbps * (dist(d.src, placement[0]) + dist(placement[-1], d.dst)) for d in block)
            scored.append((lb, placement, segs, nh, mult))
        scored.sort(key=lambda t: t[0])
        rest = lb_rest - block_asp
        for lb, placement, segs, nh, mult in scored:
            if cost + lb + rest >= best["cost"] - eps:
                break
            new_hosts = set(placement) - hosts
            if len(hosts) + len(new_hosts) > K:
                continue
            added_vnf = []
            ok = True
            for v, f in zip(placement, chain.vnfs):
                if v not in vnf_nodes[f]:
                    if len(vnf_nodes[f]) + 1 > vnfs[f].max_replicas:
                        ok = False
                        break
                    vnf_nodes[f].add(v)
                    added_vnf.append((f, v))
            cadd = defaultdict(int)
            if ok:
                for v, f in zip(placement, chain.vnfs):
                    cadd[v] += vnfs[f].cores_for(block_load)
                ok = all(cores[v] + c <= node_cores[v] for v, c in cadd.items())
            if ok:
                ok = all(load[a] + block_load * m <= cap[a] + eps for a, m in mult.items())
            if ok:
                for v, c in cadd.items():
                    cores[v] += c
                for a, m in mult.items():
                    load[a] += block_load * m
                hosts |= new_hosts
                chosen.append((chain, block, (placement, segs)))
                assign(blocks, bi + 1, cost + block_load * nh, load, cores, hosts, vnf_nodes, rest)
                chosen.pop()
                hosts -= new_hosts
                for a, m in mult.items():
                    load[a] -= block_load * m
                for v, c in cadd.items():
                    cores[v] -= c
            for f, v in added_vnf:
                vnf_nodes[f].discard(v)

    total_asp = sum(d.gbps * dist(d.src, d.dst) for d in scenario.demands)
    for combo in itertools.product(*partitions_per_chain):
        blocks = [(chain, block) for chain, part in combo for block in part]
        assign(blocks, 0, 0.0, defaultdict(float), defaultdict(int), set(), defaultdict(set), total_asp)

    if best["plan"] is None:
        raise InfeasibleModelError("brute force: no feasible mapping")
    picked, plan_routes = best["plan"]
    configs, assignment, access, egress = [], {}, {}, {}
    for chain, block, (placement, segs) in picked:
        load = sum(d.gbps for d in block)
        configs.append(Configuration(chain.id, placement, segs, load, frozenset(d.pair for d in block)))
        for d in block:
            assignment[d.key] = len(configs) - 1
            access[d.key], egress[d.key] = plan_routes[d.key]
    sol = assemble(scenario, configs, assignment, access, egress, method="brute", budgets=dict(budgets),
                   solver_objective=best["cost"])
    sol.runtime = time.perf_counter() - t0
    sol.meta.update(states=states, p_paths=p_paths, K=K)
    return sol
