import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fixture_scenario
from scmap.enum_ilp import solve_enum_ilp
from scmap.master import GroupMaster
from scmap.milp import GE, LE, solve_milp
from scmap.network import ChainSpec, Demand, build_network
from scmap.paths import HopTable, weighted_all_pairs
from scmap.solution import validate_solution
from scmap.two_phase import (arc_weights, build_group_pricing_model, partition_units, price_group, run_two_phase,
                             solve_phase2, sptg)


def line_demands():
    dem = [Demand("c", s, d, 1.0) for s in range(4) for d in range(4) if s != d]
    dem[[d.pair for d in dem].index((0, 3))] = Demand("c", 0, 3, 3.0)
    return build_network(4, [(0, 1), (1, 2), (2, 3)]), ChainSpec("c", ("A",)), dem


def test_sptg_groups_by_direction_on_a_line():
    net, chain, dem = line_demands()
    part = sptg(net, chain, dem, 2)
    forward = tuple(sorted(p for p in (d.pair for d in dem) if p[0] < p[1]))
    backward = tuple(sorted(p for p in (d.pair for d in dem) if p[0] > p[1]))
    assert part.groups == [forward, backward]
    assert part.anchors[0] == (0, 3)


def test_sptg_split_takes_smallest_pair_of_heaviest_group():
    net, chain, dem = line_demands()
    part = sptg(net, chain, dem, 3)
    assert len(part.groups) == 3
    assert part.groups[2] == ((0, 1),)
    assert (0, 1) not in part.groups[0]


def test_sptg_singletons_and_clipping():
    net, chain, dem = line_demands()
    part = sptg(net, chain, dem, 50)
    assert len(part.groups) == len(dem) and all(len(g) == 1 for g in part.groups)
    with pytest.raises(ValueError):
        sptg(net, chain, dem, 0)
    with pytest.raises(ValueError):
        sptg(net, chain, dem, 2, cluster_rule="nearby")


def test_sptg_endpoint_rule():
    net, chain, dem = line_demands()
    part = sptg(net, chain, dem, 1, cluster_rule="endpoints")
    assert len(part.groups) == 1 and len(part.groups[0]) == len(dem)


@st.composite
def instances(draw):
    n = draw(st.integers(3, 7))
    rng = random.Random(draw(st.integers(0, 10**6)))
    links = {(rng.randrange(i), i) for i in range(1, n)}
    links |= {(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.25}
    net = build_network(n, sorted(links))
    pairs = [(s, d) for s in range(n) for d in range(n) if s != d]
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=len(pairs), unique=True))
    dem = [Demand("c", s, d, draw(st.sampled_from([0.5, 1.0, 2.0, 3.0]))) for s, d in chosen]
    return net, dem, draw(st.integers(1, len(dem) + 2)), draw(st.sampled_from(["shared-link", "endpoints"]))


@settings(max_examples=150, deadline=None)
@given(instances())
def test_sptg_partition_is_valid(inst):
    net, dem, n_c, rule = inst
    part = sptg(net, ChainSpec("c", ("A",)), dem, n_c, cluster_rule=rule)
    flat = [p for g in part.groups for p in g]
    assert sorted(flat) == sorted(d.pair for d in dem)  # disjoint and covering
    assert len(part.groups) == min(n_c, len(dem))
    assert all(part.groups)


def random_duals(master, rng):
    """Sign-feasible random duals keyed by row name."""
    out = {}
    for name, sense in zip(master.model.row_names, master.model.sense):
        mag = rng.uniform(0, 3)
        out[name] = -mag if sense == LE else (mag if sense == GE else rng.uniform(-3, 3))
    return out


def test_group_pricing_model_is_linear():
    sc = fixture_scenario(6)
    part = {"basic": sptg(sc.net, sc.chains[0], sc.demands, 2)}
    units = partition_units(sc, part)
    master = GroupMaster(sc, 6, units)
    m, a, b = build_group_pricing_model(master, units[0], {})
    assert all(name.startswith(("a[", "b[")) for name in m.var_names)
    assert m.num_vars == len(a) + len(b)


@pytest.mark.parametrize("seed", range(25))
def test_dp_pricing_matches_pricing_milp(seed):
    rng = random.Random(seed)
    sc = fixture_scenario(rng.choice([4, 5, 6]))
    part = {"basic": sptg(sc.net, sc.chains[0], sc.demands, rng.randint(1, 4))}
    units = partition_units(sc, part)
    master = GroupMaster(sc, sc.net.num_nodes, units)
    duals = random_duals(master, rng)
    dist, pred = weighted_all_pairs(sc.net, arc_weights(master, duals))
    for u in units:
        dp = price_group(master, u, duals, dist, pred)
        m, _, _ = build_group_pricing_model(master, u, duals)
        ref = solve_milp(m)
        assert dp.method == "dp"
        assert dp.red_cost == pytest.approx(ref.objective, abs=1e-6)


def test_equals_enum_at_singleton_groups():
    sc = fixture_scenario(6)
    n = len(sc.demands)
    tp = run_two_phase(sc, n, 6)
    ref = solve_enum_ilp(sc.with_instances(n), 6)
    assert tp.solution.objective == pytest.approx(ref.objective, abs=1e-9)


def test_one_configuration_per_group(small_fixture):
    sc = small_fixture
    for n_c in (1, 2, 3):
        res = run_two_phase(sc, n_c, sc.net.num_nodes)
        groups = len(res.partitions["basic"].groups)
        assert res.solution.instances_per_chain()["basic"] == groups
        assert len(res.solution.configurations) == groups
        assert validate_solution(sc, res.solution, sc.net.num_nodes).feasible


def test_lp_below_ilp_and_trace(tmp_path):
    sc = fixture_scenario(5)
    res = run_two_phase(sc, 2, 2)
    assert res.lp_objective <= res.solution.objective + 1e-9
    assert res.trace and res.trace[-1].rmp_obj == pytest.approx(res.lp_objective)
    res.write_partition(tmp_path / "p.json")
    doc = json.loads((tmp_path / "p.json").read_text())
    assert doc[0]["chain"] == "basic" and doc[0]["N_c"] == 2


def test_pool_reuse_never_hurts():
    sc = fixture_scenario(6)
    part = {"basic": sptg(sc.net, sc.chains[0], sc.demands, 3)}
    first = solve_phase2(sc, part, 1)
    second = solve_phase2(sc, part, 2, pool=first.pool)
    assert second.solution.objective <= first.solution.objective + 1e-9


def test_smoothing_off_gives_same_objective():
    sc = fixture_scenario(6)
    a = run_two_phase(sc, 2, 3, smoothing=0.0, stall_smoothing=0.0)
    b = run_two_phase(sc, 2, 3)
    assert a.solution.objective == pytest.approx(b.solution.objective, abs=1e-9)
