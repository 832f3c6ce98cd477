"""Domain types and scenario file loading."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class ScenarioError(ValueError):
    """Bad input data. Carries the offending file and record."""

    def __init__(self, message: str, path: str | Path | None = None, locus: str | None = None):
        self.path = str(path) if path is not None else None
        self.locus = locus
        where = ""
        if self.path:
            where = self.path
            if locus:
                where += f" [{locus}]"
            where += ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class Node:
    id: int
    is_nfv: bool
    cores: int


@dataclass(frozen=True)
class Arc:
    id: int
    tail: int
    head: int
    capacity: float


class NetworkModel:
    """Directed-arc topology with NFV flags, core counts and link capacities."""

    def __init__(self, nodes: Sequence[Node], arcs: Sequence[Arc]):
        nodes = tuple(nodes)
        arcs = tuple(arcs)
        for idx, node in enumerate(nodes):
            if node.id != idx:
                raise ScenarioError(f"node ids must be dense 0..{len(nodes) - 1}, got {node.id} at position {idx}")
            if node.cores < 0:
                raise ScenarioError(f"node {node.id} has negative core count")
        seen = {}
        for idx, arc in enumerate(arcs):
            if arc.id != idx:
                raise ScenarioError(f"arc ids must be dense, got {arc.id} at position {idx}")
            if not (0 <= arc.tail < len(nodes) and 0 <= arc.head < len(nodes)):
                raise ScenarioError(f"arc {arc.id} references unknown node")
            if arc.tail == arc.head:
                raise ScenarioError(f"arc {arc.id} is a self-loop on node {arc.tail}")
            if not arc.capacity > 0:
                raise ScenarioError(f"arc {arc.id} has non-positive capacity {arc.capacity}")
            if (arc.tail, arc.head) in seen:
                raise ScenarioError(f"parallel arcs {seen[(arc.tail, arc.head)]} and {arc.id} between {arc.tail}->{arc.head}")
            seen[(arc.tail, arc.head)] = arc.id
        self.nodes = nodes
        self.arcs = arcs
        self._arc_by_ends = seen
        out_arcs: list[list[int]] = [[] for _ in nodes]
        in_arcs: list[list[int]] = [[] for _ in nodes]
        for arc in arcs:
            out_arcs[arc.tail].append(arc.id)
            in_arcs[arc.head].append(arc.id)
        self._out = tuple(tuple(a) for a in out_arcs)
        self._in = tuple(tuple(a) for a in in_arcs)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_arcs(self) -> int:
        return len(self.arcs)

    @property
    def nfv_nodes(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes if n.is_nfv)

    def out_arcs(self, v: int) -> tuple[int, ...]:
        return self._out[v]

    def in_arcs(self, v: int) -> tuple[int, ...]:
        return self._in[v]

    def arc_between(self, tail: int, head: int) -> int | None:
        return self._arc_by_ends.get((tail, head))

    def arcs_of_node_path(self, path: Sequence[int]) -> tuple[int, ...]:
        out = []
        for u, v in zip(path, path[1:]):
            a = self._arc_by_ends.get((u, v))
            if a is None:
                raise ValueError(f"no arc {u}->{v}")
            out.append(a)
        return tuple(out)

    def with_nodes(self, *, nfv: Iterable[int] | None = None, cores: int | None = None) -> "NetworkModel":
        """Copy with a different NFV node set and/or a uniform core count."""
        nfv_set = set(nfv) if nfv is not None else None
        nodes = [
            Node(
                n.id,
                n.is_nfv if nfv_set is None else n.id in nfv_set,
                n.cores if cores is None else cores,
            )
            for n in self.nodes
        ]
        return NetworkModel(nodes, self.arcs)

    def with_capacity(self, capacity: float) -> "NetworkModel":
        return NetworkModel(self.nodes, [replace(a, capacity=capacity) for a in self.arcs])

    def to_dict(self) -> dict:
        return {
            "directed": True,
            "nodes": [{"id": n.id, "nfv": n.is_nfv, "cores": n.cores} for n in self.nodes],
            "links": [{"from": a.tail, "to": a.head, "capacity_gbps": a.capacity} for a in self.arcs],
        }

    def __repr__(self) -> str:
        return f"NetworkModel(nodes={self.num_nodes}, arcs={self.num_arcs}, nfv={len(self.nfv_nodes)})"


def build_network(
    num_nodes: int,
    links: Iterable[tuple[int, int]],
    *,
    capacity: float = 1e6,
    cores: int | Sequence[int] = 10**6,
    nfv: Iterable[int] | None = None,
    directed: bool = False,
) -> NetworkModel:
    """Convenience constructor; undirected links become two opposing arcs.

    ``cores`` is either one count for every node or a per-node list.
    """
    nfv_set = set(range(num_nodes)) if nfv is None else set(nfv)
    per_node = [cores] * num_nodes if isinstance(cores, int) else list(cores)
    nodes = [Node(i, i in nfv_set, per_node[i]) for i in range(num_nodes)]
    arcs = []
    for u, v in links:
        arcs.append(Arc(len(arcs), u, v, capacity))
        if not directed:
            arcs.append(Arc(len(arcs), v, u, capacity))
    return NetworkModel(nodes, arcs)


@dataclass(frozen=True)
class VnfSpec:
    name: str
    cores_per_gbps: float
    max_replicas: int

    def __post_init__(self):
        if self.cores_per_gbps < 0:
            raise ScenarioError(f"VNF {self.name}: cores_per_gbps must be >= 0")
        if self.max_replicas < 1:
            raise ScenarioError(f"VNF {self.name}: max_replicas must be >= 1")

    def cores_for(self, gbps: float) -> int:
        # Rounded to absorb float noise before the ceiling (e.g. 3 * 0.1).
        return math.ceil(round(self.cores_per_gbps * gbps, 9))


@dataclass(frozen=True)
class ChainSpec:
    id: str
    vnfs: tuple[str, ...]
    instances: int = 1

    def __post_init__(self):
        object.__setattr__(self, "vnfs", tuple(self.vnfs))
        if not self.vnfs:
            raise ScenarioError(f"chain {self.id} has no VNFs")
        if self.instances < 1:
            raise ScenarioError(f"chain {self.id}: instances must be >= 1")

    @property
    def length(self) -> int:
        return len(self.vnfs)

    def positions_of(self, vnf: str) -> list[int]:
        return [i for i, f in enumerate(self.vnfs) if f == vnf]


@dataclass(frozen=True)
class Demand:
    chain: str
    src: int
    dst: int
    gbps: float

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.chain, self.src, self.dst)

    @property
    def pair(self) -> tuple[int, int]:
        return (self.src, self.dst)


class DemandSet(tuple):
    """Immutable ordered collection of demands; at most one per (chain, src, dst)."""

    def __new__(cls, entries: Iterable[Demand] = ()):
        entries = tuple(entries)
        seen = set()
        for d in entries:
            if d.src == d.dst:
                raise ScenarioError(f"demand {d.key}: src equals dst")
            if not d.gbps > 0:
                raise ScenarioError(f"demand {d.key}: non-positive volume {d.gbps}")
            if d.key in seen:
                raise ScenarioError(f"duplicate demand {d.key}")
            seen.add(d.key)
        return super().__new__(cls, entries)

    def for_chain(self, chain_id: str) -> tuple[Demand, ...]:
        return tuple(d for d in self if d.chain == chain_id)

    def by_key(self) -> dict[tuple[str, int, int], Demand]:
        return {d.key: d for d in self}

    @property
    def total(self) -> float:
        return sum(d.gbps for d in self)


@dataclass(frozen=True)
class Scenario:
    """Everything a solver needs: topology, catalogs and traffic."""

    net: NetworkModel
    vnfs: Mapping[str, VnfSpec]
    chains: tuple[ChainSpec, ...]
    demands: DemandSet
    name: str = "scenario"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "chains", tuple(self.chains))
        if not isinstance(self.demands, DemandSet):
            object.__setattr__(self, "demands", DemandSet(self.demands))
        ids = [c.id for c in self.chains]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate chain ids")
        for c in self.chains:
            for f in c.vnfs:
                if f not in self.vnfs:
                    raise ScenarioError(f"chain {c.id} references unknown VNF {f!r}")
        known = set(ids)
        n = self.net.num_nodes
        for d in self.demands:
            if d.chain not in known:
                raise ScenarioError(f"demand {d.key} references unknown chain")
            if not (0 <= d.src < n and 0 <= d.dst < n):
                raise ScenarioError(f"demand {d.key} references unknown node")

    def chain(self, chain_id: str) -> ChainSpec:
        for c in self.chains:
            if c.id == chain_id:
                return c
        raise KeyError(chain_id)

    @property
    def active_chains(self) -> tuple[ChainSpec, ...]:
        """Chains with at least one demand."""
        used = {d.chain for d in self.demands}
        return tuple(c for c in self.chains if c.id in used)

    @property
    def vnf_names(self) -> tuple[str, ...]:
        """VNFs used by some active chain, in catalog order."""
        used = {f for c in self.active_chains for f in c.vnfs}
        return tuple(f for f in self.vnfs if f in used)

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def with_replicas(self, limits: Mapping[str, int] | int) -> "Scenario":
        """Override R_f for all VNFs (int) or a subset (mapping)."""
        if isinstance(limits, int):
            limits = {f: limits for f in self.vnfs}
        vnfs = {f: replace(spec, max_replicas=limits.get(f, spec.max_replicas)) for f, spec in self.vnfs.items()}
        return self.replace(vnfs=vnfs)

    def with_instances(self, instances: Mapping[str, int] | int) -> "Scenario":
        if isinstance(instances, int):
            instances = {c.id: instances for c in self.chains}
        chains = tuple(replace(c, instances=instances.get(c.id, c.instances)) for c in self.chains)
        return self.replace(chains=chains)


# --- file loading -----------------------------------------------------------


def _read_json(path: Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ScenarioError("file not found", path) from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}", path) from None


def _require(record: Mapping, key: str, kind, path, locus):
    if not isinstance(record, Mapping) or key not in record:
        raise ScenarioError(f"missing field {key!r}", path, locus)
    value = record[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ScenarioError(f"field {key!r} must be an integer", path, locus)
    if kind is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise ScenarioError(f"field {key!r} must be a number", path, locus)
    if kind is bool and not isinstance(value, bool):
        raise ScenarioError(f"field {key!r} must be a boolean", path, locus)
    if kind is str and not isinstance(value, str):
        raise ScenarioError(f"field {key!r} must be a string", path, locus)
    return value


def load_topology(path: str | Path) -> NetworkModel:
    path = Path(path)
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ScenarioError("topology must be a JSON object", path)
    directed = doc.get("directed", False)
    if not isinstance(directed, bool):
        raise ScenarioError("'directed' must be a boolean", path)
    raw_nodes = doc.get("nodes")
    raw_links = doc.get("links")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise ScenarioError("'nodes' must be a non-empty list", path)
    if not isinstance(raw_links, list):
        raise ScenarioError("'links' must be a list", path)
    nodes = []
    for i, rec in enumerate(raw_nodes):
        locus = f"nodes[{i}]"
        nid = _require(rec, "id", int, path, locus)
        nfv = _require(rec, "nfv", bool, path, locus)
        cores = _require(rec, "cores", int, path, locus)
        if cores < 0:
            raise ScenarioError("cores must be non-negative", path, locus)
        nodes.append(Node(nid, nfv, cores))
    nodes.sort(key=lambda n: n.id)
    if [n.id for n in nodes] != list(range(len(nodes))):
        raise ScenarioError("node ids must be dense 0..|V|-1", path, "nodes")
    arcs: list[Arc] = []
    for i, rec in enumerate(raw_links):
        locus = f"links[{i}]"
        u = _require(rec, "from", int, path, locus)
        v = _require(rec, "to", int, path, locus)
        cap = float(_require(rec, "capacity_gbps", float, path, locus))
        if not (0 <= u < len(nodes) and 0 <= v < len(nodes)):
            raise ScenarioError(f"dangling node reference {u}->{v}", path, locus)
        if u == v:
            raise ScenarioError("self-loop", path, locus)
        if not cap > 0:
            raise ScenarioError(f"non-positive capacity {cap}", path, locus)
        arcs.append(Arc(len(arcs), u, v, cap))
        if not directed:
            arcs.append(Arc(len(arcs), v, u, cap))
    try:
        return NetworkModel(nodes, arcs)
    except ScenarioError as exc:
        raise ScenarioError(str(exc), path, "links") from None


def load_vnfs(path: str | Path) -> dict[str, VnfSpec]:
    path = Path(path)
    doc = _read_json(path)
    if not isinstance(doc, list) or not doc:
        raise ScenarioError("VNF catalog must be a non-empty list", path)
    out: dict[str, VnfSpec] = {}
    for i, rec in enumerate(doc):
        locus = f"[{i}]"
        name = _require(rec, "name", str, path, locus)
        cpg = float(_require(rec, "cores_per_gbps", float, path, locus))
        reps = _require(rec, "max_replicas", int, path, locus)
        if name in out:
            raise ScenarioError(f"duplicate VNF {name!r}", path, locus)
        try:
            out[name] = VnfSpec(name, cpg, reps)
        except ScenarioError as exc:
            raise ScenarioError(str(exc), path, locus) from None
    return out


def load_chains(path: str | Path, vnfs: Mapping[str, VnfSpec]) -> tuple[ChainSpec, ...]:
    path = Path(path)
    doc = _read_json(path)
    if not isinstance(doc, list) or not doc:
        raise ScenarioError("chain catalog must be a non-empty list", path)
    chains = []
    for i, rec in enumerate(doc):
        locus = f"[{i}]"
        cid = _require(rec, "id", str, path, locus)
        seq = rec.get("vnfs") if isinstance(rec, Mapping) else None
        if not isinstance(seq, list) or not seq or not all(isinstance(f, str) for f in seq):
            raise ScenarioError("'vnfs' must be a non-empty list of names", path, locus)
        for f in seq:
            if f not in vnfs:
                raise ScenarioError(f"unknown VNF {f!r}", path, locus)
        inst = _require(rec, "instances", int, path, locus)
        try:
            chains.append(ChainSpec(cid, tuple(seq), inst))
        except ScenarioError as exc:
            raise ScenarioError(str(exc), path, locus) from None
    if len({c.id for c in chains}) != len(chains):
        raise ScenarioError("duplicate chain id", path)
    return tuple(chains)


def load_traffic(path: str | Path, chains: Sequence[ChainSpec], num_nodes: int) -> DemandSet:
    path = Path(path)
    known = {c.id for c in chains}
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise ScenarioError("file not found", path) from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["chain", "src", "dst", "gbps"]:
            if reader.fieldnames is None:
                raise ScenarioError("no demands", path)
            raise ScenarioError("header must be chain,src,dst,gbps", path, "line 1")
        entries = []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            locus = f"line {lineno}"
            try:
                chain = row["chain"].strip()
                src = int(row["src"])
                dst = int(row["dst"])
                gbps = float(row["gbps"])
            except (TypeError, ValueError, AttributeError):
                raise ScenarioError("malformed row", path, locus) from None
            if chain not in known:
                raise ScenarioError(f"unknown chain {chain!r}", path, locus)
            if not (0 <= src < num_nodes and 0 <= dst < num_nodes):
                raise ScenarioError(f"unknown node in {src}->{dst}", path, locus)
            if src == dst:
                raise ScenarioError("src equals dst", path, locus)
            if not gbps > 0:
                raise ScenarioError(f"non-positive demand {gbps}", path, locus)
            if (chain, src, dst) in seen:
                raise ScenarioError(f"duplicate demand {(chain, src, dst)}", path, locus)
            seen.add((chain, src, dst))
            entries.append(Demand(chain, src, dst, gbps))
    if not entries:
        raise ScenarioError("no demands", path)
    return DemandSet(entries)


def load_scenario(topology_file, vnf_file, chains_file, traffic_file, name: str | None = None) -> Scenario:
    net = load_topology(topology_file)
    vnfs = load_vnfs(vnf_file)
    chains = load_chains(chains_file, vnfs)
    demands = load_traffic(traffic_file, chains, net.num_nodes)
    return Scenario(net, vnfs, chains, demands, name=name or Path(topology_file).stem)


def write_traffic(path: str | Path, demands: Iterable[Demand]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "src", "dst", "gbps"])
        for d in demands:
            w.writerow([d.chain, d.src, d.dst, repr(d.gbps)])
