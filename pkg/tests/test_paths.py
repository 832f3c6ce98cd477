import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import dfs_simple_paths, floyd_warshall
from scmap.cli import data_file
from scmap.network import build_network, load_topology
from scmap.paths import (HopTable, PathCache, UnreachableError, all_simple_paths, k_shortest_paths, pred_path,
                         trace_walk, walk_end, weighted_all_pairs)


@st.composite
def graphs(draw, max_nodes=7):
    n = draw(st.integers(2, max_nodes))
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    arcs = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    return build_network(n, arcs, directed=True)


@settings(max_examples=80, deadline=None)
@given(graphs())
def test_hop_table_matches_floyd_warshall(net):
    ref = floyd_warshall(net.num_nodes, [(a.tail, a.head) for a in net.arcs])
    hops = HopTable(net)
    for s in range(net.num_nodes):
        for t in range(net.num_nodes):
            if ref[s][t] == float("inf"):
                assert not hops.reachable(s, t)
                continue
            assert hops.hops(s, t) == ref[s][t]
            path = hops.arc_path(s, t)
            assert len(path) == ref[s][t] and walk_end(net, s, path) == t


@pytest.mark.parametrize("name", ["nsfnet", "cost239"])
def test_bundled_topologies_against_floyd_warshall(name):
    net = load_topology(data_file(f"{name}.json"))
    ref = floyd_warshall(net.num_nodes, [(a.tail, a.head) for a in net.arcs])
    hops = HopTable(net)
    assert all(hops.hops(s, t) == ref[s][t] for s in range(net.num_nodes) for t in range(net.num_nodes))


def test_unreachable_pair_raises():
    net = build_network(3, [(0, 1)], directed=True)
    with pytest.raises(UnreachableError):
        HopTable(net).require([(1, 0)])


@settings(max_examples=60, deadline=None)
@given(graphs(max_nodes=6), st.integers(1, 6))
def test_k_shortest_are_the_shortest_simple_paths(net, k):
    s, t = 0, net.num_nodes - 1
    every = dfs_simple_paths(net.num_nodes, [(a.tail, a.head) for a in net.arcs], s, t)
    got = k_shortest_paths(net, s, t, k)
    assert len(got) == min(k, len(every))
    assert len(set(got)) == len(got) and all(p in every for p in got)
    lengths = sorted(len(p) for p in every)
    assert sorted(len(p) for p in got) == lengths[:len(got)]
    assert sorted(all_simple_paths(net, s, t)) == sorted(every)


def test_path_cache_colocated_and_k():
    net = build_network(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    cache = PathCache(net, 2)
    assert cache(1, 1) == [()]
    two = cache(0, 2)
    assert [len(p) for p in two] == [2, 2]


def test_weighted_all_pairs_matches_bellman_style_relaxation():
    rng = random.Random(4)
    net = load_topology(data_file("nsfnet.json"))
    w = [rng.uniform(0.1, 5) for _ in net.arcs]
    dist, pred = weighted_all_pairs(net, w)
    ref = np.full((net.num_nodes, net.num_nodes), np.inf)
    np.fill_diagonal(ref, 0)
    for _ in range(net.num_nodes):
        for a in net.arcs:
            ref[:, a.head] = np.minimum(ref[:, a.head], ref[:, a.tail] + w[a.id])
    assert np.allclose(dist, ref)
    for s, t in [(0, 13), (5, 2), (9, 9)]:
        p = pred_path(net, pred, s, t)
        assert walk_end(net, s, p) == t
        assert sum(w[a] for a in p) == pytest.approx(dist[s, t])


def test_trace_walk_orders_arcs():
    net = build_network(4, [(0, 1), (1, 2), (2, 3)], directed=True)
    arcs = [net.arc_between(2, 3), net.arc_between(0, 1), net.arc_between(1, 2)]
    assert trace_walk(net, 0, 3, arcs) == (net.arc_between(0, 1), net.arc_between(1, 2), net.arc_between(2, 3))
    assert trace_walk(net, 0, 3, arcs[:2]) is None
