from math import comb

import pytest

from conftest import all_to_all_scenario, fixture_scenario, random_instance
from scmap.baselines import brute_force_opt
from scmap.enum_ilp import (EnumerationLimitError, count_configurations, enumerate_configurations, solve_enum_ilp,
                            structural_count)
from scmap.master import InfeasibleModelError
from scmap.network import ChainSpec, Demand, DemandSet, Scenario, VnfSpec, build_network
from scmap.solution import validate_solution


def test_count_formula():
    net = build_network(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    chain = ChainSpec("c", ("A", "B"))
    dem = [Demand("c", 0, 2, 1.0), Demand("c", 1, 3, 1.0), Demand("c", 2, 0, 1.0)]
    assert count_configurations(chain, dem, net, 2) == (comb(3, 1) + comb(3, 2) + comb(3, 3)) * 4 ** 2 * 2


def test_enumeration_matches_structural_count_and_is_valid():
    net = build_network(4, [(0, 1), (1, 2), (2, 3), (3, 0)], nfv=[0, 1, 2])
    chain = ChainSpec("c", ("A", "B", "A"))
    dem = [Demand("c", 0, 2, 1.0), Demand("c", 1, 3, 2.0)]
    cfgs = enumerate_configurations(chain, dem, net, p_paths=2)
    assert len(cfgs) == structural_count(chain, dem, net, 2)
    assert len(cfgs) <= count_configurations(chain, dem, net, 2)
    assert len({c.key for c in cfgs}) == len(cfgs)
    for c in cfgs:
        assert not c.check(net, chain)
        assert c.load == sum(d.gbps for d in dem if d.pair in c.flows)


def test_cap_guard():
    sc = all_to_all_scenario("nsfnet")
    with pytest.raises(EnumerationLimitError, match="use CG"):
        solve_enum_ilp(sc, 14)
    with pytest.raises(EnumerationLimitError):
        enumerate_configurations(sc.chains[0], sc.demands[:5], sc.net, cap=10)


def test_fixture_objectives_bounded_below_by_brute(small_fixture):
    sc = small_fixture
    K = sc.net.num_nodes
    sol = solve_enum_ilp(sc, K, p_paths=2)
    assert validate_solution(sc, sol, K).feasible
    assert sol.objective == brute_force_opt(sc, K, p_paths=2).objective
    assert sol.lp_objective <= sol.objective + 1e-9


def test_instance_budget_respected():
    sc = fixture_scenario(6).with_instances(2)
    sol = solve_enum_ilp(sc, 6, p_paths=2)
    assert sol.instances_per_chain()["basic"] <= 2


def test_infeasible_reports_families():
    net = build_network(3, [(0, 1), (1, 2)], cores=1)
    sc = Scenario(net, {"A": VnfSpec("A", 1, 1)}, (ChainSpec("c", ("A",)),),
                  DemandSet([Demand("c", 0, 2, 2.0)]))
    with pytest.raises(InfeasibleModelError) as err:
        solve_enum_ilp(sc, 3)
    assert "node-cores" in err.value.families


def test_dump_configurations(tmp_path):
    sc = fixture_scenario(4)
    solve_enum_ilp(sc, 4, p_paths=1, dump_path=tmp_path / "cfg.json")
    assert (tmp_path / "cfg.json").read_text().startswith("[")


@pytest.mark.parametrize("seed", range(100, 130))
def test_random_instances_match_brute_force(seed):
    sc, K = random_instance(seed)
    try:
        ref = brute_force_opt(sc, K, p_paths=2).objective
    except InfeasibleModelError:
        with pytest.raises(InfeasibleModelError):
            solve_enum_ilp(sc, K, p_paths=2)
        return
    assert solve_enum_ilp(sc, K, p_paths=2).objective == ref
