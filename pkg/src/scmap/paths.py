"""Hop-count shortest paths, k loopless paths and path helpers."""

from __future__ import annotations

from collections import deque
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .network import NetworkModel

UNREACHABLE = -1


class UnreachableError(ValueError):
    pass


class HopTable:
    """All-pairs hop distances with one canonical shortest path per pair.

    The canonical path has minimum hop count and, among those, the
    lexicographically smallest node sequence.
    """

    def __init__(self, net: NetworkModel):
        n = net.num_nodes
        self.net = net
        dist = np.full((n, n), UNREACHABLE, dtype=np.int64)
        # reverse BFS from every target
        for t in range(n):
            dist[t, t] = 0
            queue = deque([t])
            while queue:
                v = queue.popleft()
                for a in net.in_arcs(v):
                    u = net.arcs[a].tail
                    if dist[u, t] == UNREACHABLE:
                        dist[u, t] = dist[v, t] + 1
                        queue.append(u)
        self.dist = dist
        nxt = np.full((n, n), UNREACHABLE, dtype=np.int64)
        for s in range(n):
            heads = sorted((net.arcs[a].head, a) for a in net.out_arcs(s))
            for t in range(n):
                if s == t or dist[s, t] == UNREACHABLE:
                    continue
                for head, _ in heads:
                    if dist[head, t] == dist[s, t] - 1:
                        nxt[s, t] = head
                        break
        self._next = nxt

    def hops(self, s: int, t: int) -> int:
        d = int(self.dist[s, t])
        if d == UNREACHABLE:
            raise UnreachableError(f"node {t} unreachable from {s}")
        return d

    def reachable(self, s: int, t: int) -> bool:
        return self.dist[s, t] != UNREACHABLE

    def node_path(self, s: int, t: int) -> tuple[int, ...]:
        self.hops(s, t)
        path = [s]
        while path[-1] != t:
            path.append(int(self._next[path[-1], t]))
        return tuple(path)

    def arc_path(self, s: int, t: int) -> tuple[int, ...]:
        return self.net.arcs_of_node_path(self.node_path(s, t))

    def require(self, pairs: Iterable[tuple[int, int]]) -> None:
        for s, t in pairs:
            if not self.reachable(s, t):
                raise UnreachableError(f"demanded pair {s}->{t} is unreachable")


def all_pairs_shortest_hops(net: NetworkModel) -> HopTable:
    return HopTable(net)


def _digraph(net: NetworkModel) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(range(net.num_nodes))
    g.add_edges_from((a.tail, a.head) for a in net.arcs)
    return g


def k_shortest_paths(net: NetworkModel, s: int, t: int, k: int, graph: nx.DiGraph | None = None) -> list[tuple[int, ...]]:
    """Up to ``k`` loopless s-t paths as arc-id tuples, sorted by (hops, arc ids)."""
    if s == t:
        raise ValueError("k_shortest_paths requires s != t")
    if k < 1:
        raise ValueError("k must be positive")
    g = graph if graph is not None else _digraph(net)
    gen = nx.shortest_simple_paths(g, s, t)
    collected = []
    try:
        for path in gen:
            arcs = net.arcs_of_node_path(path)
            if len(collected) >= k and len(arcs) > len(collected[k - 1]):
                break
            # generator is length-ordered: keep collecting equal-length ties, then re-sort
            collected.append(arcs)
    except nx.NetworkXNoPath:
        return []
    collected.sort(key=lambda p: (len(p), p))
    return collected[:k]


class PathCache:
    """Memoised k-shortest paths for one network."""

    def __init__(self, net: NetworkModel, k: int):
        self.net = net
        self.k = k
        self._graph = _digraph(net)
        self._cache: dict[tuple[int, int], list[tuple[int, ...]]] = {}

    def __call__(self, s: int, t: int) -> list[tuple[int, ...]]:
        if s == t:
            return [()]
        key = (s, t)
        if key not in self._cache:
            self._cache[key] = k_shortest_paths(self.net, s, t, self.k, self._graph)
        return self._cache[key]


def all_simple_paths(net: NetworkModel, s: int, t: int, cutoff: int | None = None) -> list[tuple[int, ...]]:
    """Every loopless s-t path (arc ids), shortest first. ``()`` when s == t."""
    if s == t:
        return [()]
    g = _digraph(net)
    paths = [net.arcs_of_node_path(p) for p in nx.all_simple_paths(g, s, t, cutoff=cutoff)]
    paths.sort(key=lambda p: (len(p), p))
    return paths


def walk_end(net: NetworkModel, start: int, arcs: Sequence[int]) -> int | None:
    """End node of the walk ``arcs`` from ``start``; None if not a contiguous walk."""
    v = start
    for a in arcs:
        arc = net.arcs[a]
        if arc.tail != v:
            return None
        v = arc.head
    return v


def trace_walk(net: NetworkModel, start: int, target: int, arcs: Iterable[int]) -> tuple[int, ...] | None:
    """Order an unordered arc set into a walk start -> target, or None."""
    remaining = set(arcs)
    if start == target:
        return () if not remaining else None
    walk = []
    v = start
    while v != target:
        nxt = [a for a in remaining if net.arcs[a].tail == v]
        if len(nxt) != 1:
            return None
        a = nxt[0]
        remaining.discard(a)
        walk.append(a)
        v = net.arcs[a].head
    if remaining:
        return None
    return tuple(walk)


def weighted_all_pairs(net: NetworkModel, weights: Sequence[float]):
    """Dijkstra all-pairs with non-negative arc weights.

    Returns (dist, pred) as from scipy.sparse.csgraph.shortest_path.
    """
    n = net.num_nodes
    tails = [a.tail for a in net.arcs]
    heads = [a.head for a in net.arcs]
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("negative arc weight")
    # csgraph treats explicit zeros as missing edges
    w = np.maximum(w, 1e-300)
    graph = csr_matrix((w, (tails, heads)), shape=(n, n))
    dist, pred = shortest_path(graph, method="D", directed=True, return_predecessors=True)
    return dist, pred


def pred_path(net: NetworkModel, pred: np.ndarray, s: int, t: int) -> tuple[int, ...]:
    if s == t:
        return ()
    nodes = [t]
    while nodes[-1] != s:
        p = int(pred[s, nodes[-1]])
        if p < 0:
            raise UnreachableError(f"{t} unreachable from {s}")
        nodes.append(p)
    return net.arcs_of_node_path(nodes[::-1])


def path_nodes(net: NetworkModel, start: int, arcs: Sequence[int]) -> list[int]:
    nodes = [start]
    for a in arcs:
        nodes.append(net.arcs[a].head)
    return nodes
