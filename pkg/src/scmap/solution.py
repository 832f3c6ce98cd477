"""Configurations, mapping solutions and the independent feasibility checker."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .network import ChainSpec, NetworkModel, Scenario, VnfSpec
from .paths import walk_end

DemandKey = tuple[str, int, int]


@dataclass(frozen=True)
class Configuration:
    """One candidate deployment of a chain.

    ``placement[i]`` is the node hosting the i-th VNF; ``segments[i]`` the
    arcs from ``placement[i]`` to ``placement[i+1]``. ``flows`` holds the
    attached (src, dst) pairs for flow-carrying configurations and is empty
    when flow attachment is decided elsewhere (two-phase groups). ``load``
    is the traffic volume the configuration carries.
    """

    chain_id: str
    placement: tuple[int, ...]
    segments: tuple[tuple[int, ...], ...]
    load: float
    flows: frozenset = frozenset()
    group: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "placement", tuple(int(v) for v in self.placement))
        object.__setattr__(self, "segments", tuple(tuple(int(a) for a in s) for s in self.segments))
        object.__setattr__(self, "flows", frozenset(self.flows))
        if len(self.segments) != max(0, len(self.placement) - 1):
            raise ValueError("need exactly n_c - 1 segments")

    @property
    def hops(self) -> int:
        return sum(len(s) for s in self.segments)

    @property
    def cost(self) -> float:
        return self.load * self.hops

    @property
    def first(self) -> int:
        return self.placement[0]

    @property
    def last(self) -> int:
        return self.placement[-1]

    @property
    def key(self) -> tuple:
        return (self.group or self.chain_id, self.placement, self.segments, tuple(sorted(self.flows)))

    def arc_multiplicity(self) -> dict[int, int]:
        out: dict[int, int] = defaultdict(int)
        for seg in self.segments:
            for a in seg:
                out[a] += 1
        return out

    def cores(self, chain: ChainSpec, vnfs: Mapping[str, VnfSpec]) -> dict[int, int]:
        """Cores per node: each position costs ceil(cores_per_gbps * load)."""
        out: dict[int, int] = defaultdict(int)
        for v, f in zip(self.placement, chain.vnfs):
            out[v] += vnfs[f].cores_for(self.load)
        return dict(out)

    def check(self, net: NetworkModel, chain: ChainSpec) -> list[str]:
        problems = []
        if len(self.placement) != chain.length:
            problems.append(f"placement has {len(self.placement)} positions, chain needs {chain.length}")
            return problems
        for i, v in enumerate(self.placement):
            if not (0 <= v < net.num_nodes) or not net.nodes[v].is_nfv:
                problems.append(f"position {i} on non-NFV node {v}")
        for i, seg in enumerate(self.segments):
            u, w = self.placement[i], self.placement[i + 1]
            if u == w and seg:
                problems.append(f"segment {i} non-empty between co-located positions")
            elif walk_end(net, u, seg) != w:
                problems.append(f"segment {i} is not a walk {u}->{w}")
        return problems

    def to_dict(self) -> dict:
        return {
            "chain": self.chain_id,
            "group": self.group,
            "placement": list(self.placement),
            "segments": [list(s) for s in self.segments],
            "load": self.load,
            "flows": sorted([list(p) for p in self.flows]),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Configuration":
        return cls(d["chain"], tuple(d["placement"]), tuple(tuple(s) for s in d["segments"]), float(d["load"]),
                   frozenset(tuple(p) for p in d.get("flows", [])), d.get("group"))


@dataclass
class MappingSolution:
    """Selected configurations plus per-demand access/egress routes."""

    configurations: list[Configuration]
    assignment: dict[DemandKey, int]
    access: dict[DemandKey, tuple[int, ...]]
    egress: dict[DemandKey, tuple[int, ...]]
    method: str = ""
    status: str = "optimal"
    solver_objective: float = math.nan
    lp_objective: float = math.nan
    runtime: float = 0.0
    budgets: dict[str, int] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    # derived totals, filled by ``compute_totals``
    bandwidth: float = math.nan
    cores_per_node: dict[int, int] = field(default_factory=dict)
    arc_load: dict[int, float] = field(default_factory=dict)
    vnf_nodes: dict[str, tuple[int, ...]] = field(default_factory=dict)
    nfv_nodes_used: tuple[int, ...] = ()

    @property
    def objective(self) -> float:
        return self.bandwidth

    @property
    def total_cores(self) -> int:
        return sum(self.cores_per_node.values())

    def instances_per_chain(self) -> dict[str, int]:
        used = defaultdict(set)
        for k, idx in self.assignment.items():
            used[k[0]].add(idx)
        return {c: len(v) for c, v in used.items()}

    def compute_totals(self, scenario: Scenario) -> "MappingSolution":
        demands = scenario.demands.by_key()
        bw = 0.0
        load: dict[int, float] = defaultdict(float)
        for key, idx in self.assignment.items():
            d = demands[key]
            cfg = self.configurations[idx]
            hops = len(self.access[key]) + cfg.hops + len(self.egress[key])
            bw += d.gbps * hops
            for a in self.access[key]:
                load[a] += d.gbps
            for a in self.egress[key]:
                load[a] += d.gbps
            for a, mult in cfg.arc_multiplicity().items():
                load[a] += d.gbps * mult
        cores: dict[int, int] = defaultdict(int)
        vnf_nodes: dict[str, set] = defaultdict(set)
        for cfg in self.configurations:
            chain = scenario.chain(cfg.chain_id)
            for v, c in cfg.cores(chain, scenario.vnfs).items():
                cores[v] += c
            for v, f in zip(cfg.placement, chain.vnfs):
                vnf_nodes[f].add(v)
        self.bandwidth = bw
        self.arc_load = dict(sorted(load.items()))
        self.cores_per_node = dict(sorted(cores.items()))
        self.vnf_nodes = {f: tuple(sorted(v)) for f, v in sorted(vnf_nodes.items())}
        self.nfv_nodes_used = tuple(sorted({v for cfg in self.configurations for v in cfg.placement}))
        return self

    def to_dict(self) -> dict:
        def key_str(k):
            return f"{k[0]}:{k[1]}:{k[2]}"

        return {
            "method": self.method,
            "status": self.status,
            "objective": self.bandwidth,
            "solver_objective": self.solver_objective,
            "lp_objective": None if math.isnan(self.lp_objective) else self.lp_objective,
            "runtime": self.runtime,
            "budgets": self.budgets,
            "configurations": [c.to_dict() for c in self.configurations],
            "demands": [
                {
                    "chain": k[0], "src": k[1], "dst": k[2],
                    "configuration": self.assignment[k],
                    "access": list(self.access[k]),
                    "egress": list(self.egress[k]),
                }
                for k in sorted(self.assignment, key=key_str)
            ],
            "nfv_nodes_used": list(self.nfv_nodes_used),
            "cores_per_node": {str(k): v for k, v in self.cores_per_node.items()},
            "arc_load": {str(k): v for k, v in self.arc_load.items()},
            "vnf_nodes": {f: list(v) for f, v in self.vnf_nodes.items()},
            "meta": self.meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=False)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "MappingSolution":
        configs = [Configuration.from_dict(c) for c in doc["configurations"]]
        assignment, access, egress = {}, {}, {}
        for rec in doc["demands"]:
            k = (rec["chain"], int(rec["src"]), int(rec["dst"]))
            assignment[k] = int(rec["configuration"])
            access[k] = tuple(rec["access"])
            egress[k] = tuple(rec["egress"])
        sol = cls(configs, assignment, access, egress, method=doc.get("method", ""), status=doc.get("status", ""),
                  solver_objective=float(doc.get("solver_objective", math.nan) or math.nan),
                  budgets=dict(doc.get("budgets", {})), meta=dict(doc.get("meta", {})))
        sol.bandwidth = float(doc.get("objective", math.nan))
        return sol

    @classmethod
    def from_json(cls, path) -> "MappingSolution":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Violation:
    family: str
    locus: str
    detail: str

    def __str__(self) -> str:
        return f"[{self.family}] {self.locus}: {self.detail}"


@dataclass
class FeasibilityReport:
    violations: list[Violation] = field(default_factory=list)
    bandwidth: float = math.nan

    @property
    def feasible(self) -> bool:
        return not self.violations

    def families(self) -> set[str]:
        return {v.family for v in self.violations}

    def add(self, family: str, locus: str, detail: str) -> None:
        self.violations.append(Violation(family, locus, detail))

    def __str__(self) -> str:
        if self.feasible:
            return "feasible"
        return "infeasible:\n" + "\n".join(f"  {v}" for v in self.violations)


def validate_solution(scenario: Scenario, sol: MappingSolution, K: int,
                      budgets: Mapping[str, int] | None = None, tol: float = 1e-6) -> FeasibilityReport:
    """Re-derive every quantity from the raw solution and check all constraint families.

    Nothing the solver reported is trusted except the routes and placements.
    """
    net = scenario.net
    report = FeasibilityReport()
    demands = scenario.demands.by_key()
    if budgets is None:
        budgets = sol.budgets or {c.id: c.instances for c in scenario.chains}
    chains = {c.id: c for c in scenario.chains}

    for idx, cfg in enumerate(sol.configurations):
        if cfg.chain_id not in chains:
            report.add("configuration", f"config {idx}", f"unknown chain {cfg.chain_id}")
            continue
        for p in cfg.check(net, chains[cfg.chain_id]):
            report.add("configuration", f"config {idx}", p)

    # coverage
    for key in demands:
        if key not in sol.assignment:
            report.add("coverage", f"demand {key}", "not served by any configuration")
    for key in sol.assignment:
        if key not in demands:
            report.add("coverage", f"demand {key}", "unknown demand in solution")
    if not report.feasible:
        return report

    load_of: dict[int, float] = defaultdict(float)
    bw = 0.0
    served_by: dict[int, list[DemandKey]] = defaultdict(list)
    for key, idx in sol.assignment.items():
        d = demands[key]
        if not 0 <= idx < len(sol.configurations):
            report.add("coverage", f"demand {key}", f"configuration index {idx} out of range")
            continue
        cfg = sol.configurations[idx]
        served_by[idx].append(key)
        if cfg.chain_id != d.chain:
            report.add("coverage", f"demand {key}", f"assigned to configuration of chain {cfg.chain_id}")
        if cfg.flows and d.pair not in cfg.flows:
            report.add("coverage", f"demand {key}", "flow not attached to its configuration")
        acc = sol.access.get(key)
        egr = sol.egress.get(key)
        if acc is None or walk_end(net, d.src, acc) != cfg.first:
            report.add("access-route", f"demand {key}", f"not a walk {d.src}->{cfg.first}")
        if egr is None or walk_end(net, cfg.last, egr) != d.dst:
            report.add("egress-route", f"demand {key}", f"not a walk {cfg.last}->{d.dst}")
        acc = acc or ()
        egr = egr or ()
        for a in acc:
            load_of[a] += d.gbps
        for a in egr:
            load_of[a] += d.gbps
        for a, mult in cfg.arc_multiplicity().items():
            load_of[a] += d.gbps * mult
        bw += d.gbps * (len(acc) + cfg.hops + len(egr))
    report.bandwidth = bw

    # every attached flow set must match the demands actually routed through it
    for idx, cfg in enumerate(sol.configurations):
        keys = served_by.get(idx, [])
        if not keys:
            report.add("coverage", f"config {idx}", "selected configuration serves no demand")
            continue
        carried = sum(demands[k].gbps for k in keys)
        if abs(carried - cfg.load) > tol * max(1.0, carried):
            report.add("coverage", f"config {idx}", f"load {cfg.load} differs from served traffic {carried}")
        if cfg.flows and set(cfg.flows) != {(k[1], k[2]) for k in keys}:
            report.add("coverage", f"config {idx}", "attached flows differ from served demands")

    for a, load in sorted(load_of.items()):
        cap = net.arcs[a].capacity
        if load > cap + tol * max(1.0, cap):
            arc = net.arcs[a]
            report.add("link-capacity", f"arc {a} ({arc.tail}->{arc.head})", f"load {load:g} > capacity {cap:g}")

    cores: dict[int, int] = defaultdict(int)
    vnf_nodes: dict[str, set] = defaultdict(set)
    for cfg in sol.configurations:
        chain = chains[cfg.chain_id]
        for v, c in cfg.cores(chain, scenario.vnfs).items():
            cores[v] += c
        for v, f in zip(cfg.placement, chain.vnfs):
            vnf_nodes[f].add(v)
    for v, c in sorted(cores.items()):
        if c > net.nodes[v].cores:
            report.add("node-cores", f"node {v}", f"{c} cores used > {net.nodes[v].cores} available")
    for f, nodes in sorted(vnf_nodes.items()):
        if len(nodes) > scenario.vnfs[f].max_replicas:
            report.add("vnf-replicas", f"VNF {f}", f"hosted on {len(nodes)} nodes > R_f={scenario.vnfs[f].max_replicas}")
    hosts = {v for cfg in sol.configurations for v in cfg.placement}
    if len(hosts) > K:
        report.add("nfv-node-budget", "network", f"{len(hosts)} NFV nodes host VNFs > K={K}")

    per_chain: dict[str, set] = defaultdict(set)
    for key, idx in sol.assignment.items():
        per_chain[key[0]].add(idx)
    for cid, idxs in sorted(per_chain.items()):
        limit = budgets.get(cid)
        if limit is not None and len(idxs) > limit:
            report.add("instance-budget", f"chain {cid}", f"{len(idxs)} configurations > budget {limit}")

    if not math.isnan(sol.solver_objective):
        if abs(sol.solver_objective - bw) > 1e-6 * max(1.0, abs(bw)):
            report.add("objective", "solution", f"reported {sol.solver_objective} != recomputed {bw}")
    return report


def assemble(scenario: Scenario, configs: Sequence[Configuration], assignment: Mapping[DemandKey, int],
             access: Mapping[DemandKey, Iterable[int]], egress: Mapping[DemandKey, Iterable[int]], **kw) -> MappingSolution:
    sol = MappingSolution(list(configs), dict(assignment), {k: tuple(v) for k, v in access.items()},
                          {k: tuple(v) for k, v in egress.items()}, **kw)
    return sol.compute_totals(scenario)
