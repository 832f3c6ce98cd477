import json
from dataclasses import replace

import pytest

from conftest import fixture_scenario
from scmap.cli import data_file
from scmap.enum_ilp import solve_enum_ilp
from scmap.network import (ChainSpec, Demand, DemandSet, Scenario, ScenarioError, VnfSpec, build_network, load_chains,
                           load_scenario, load_topology, load_traffic, load_vnfs, write_traffic)
from scmap.solution import Configuration, MappingSolution, validate_solution


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_bundled_topologies_load():
    nsf = load_topology(data_file("nsfnet.json"))
    assert (nsf.num_nodes, nsf.num_arcs) == (14, 42)
    cost = load_topology(data_file("cost239.json"))
    assert (cost.num_nodes, cost.num_arcs) == (11, 52)
    for v in range(nsf.num_nodes):
        for a in nsf.out_arcs(v):
            assert nsf.arcs[a].tail == v and a in nsf.in_arcs(nsf.arcs[a].head)


def test_bundled_catalogs():
    vnfs = load_vnfs(data_file("vnfs.json"))
    chains = {c.id: c for c in load_chains(data_file("chains.json"), vnfs)}
    assert set(chains) == {"web", "voip", "video", "gaming"}
    assert all(f in vnfs for c in chains.values() for f in c.vnfs)


def test_directed_topology(tmp_path):
    p = write_json(tmp_path / "t.json", {"directed": True, "nodes": [{"id": 0, "nfv": True, "cores": 4},
                                                                      {"id": 1, "nfv": False, "cores": 0}],
                                         "links": [{"from": 0, "to": 1, "capacity_gbps": 10}]})
    net = load_topology(p)
    assert net.num_arcs == 1 and net.nfv_nodes == (0,)
    assert net.arc_between(0, 1) == 0 and net.arc_between(1, 0) is None


@pytest.mark.parametrize("doc, fragment", [
    ({"nodes": [{"id": 0, "nfv": True, "cores": 1}, {"id": 2, "nfv": True, "cores": 1}], "links": []}, "dense"),
    ({"nodes": [{"id": 0, "nfv": True, "cores": 1}], "links": [{"from": 0, "to": 0, "capacity_gbps": 1}]},
     "self-loop"),
    ({"nodes": [{"id": 0, "nfv": True, "cores": 1}], "links": [{"from": 0, "to": 3, "capacity_gbps": 1}]},
     "dangling"),
    ({"nodes": [{"id": 0, "nfv": True, "cores": 1}, {"id": 1, "nfv": True, "cores": 1}],
      "links": [{"from": 0, "to": 1, "capacity_gbps": 0}]}, "capacity"),
    ({"nodes": [{"id": 0, "nfv": True, "cores": -1}], "links": []}, "cores"),
    ({"nodes": [{"id": 0, "nfv": "yes", "cores": 1}], "links": []}, "nfv"),
])
def test_bad_topology_names_the_record(tmp_path, doc, fragment):
    p = write_json(tmp_path / "bad.json", doc)
    with pytest.raises(ScenarioError) as err:
        load_topology(p)
    assert fragment in str(err.value) and "bad.json" in str(err.value)


def test_bad_catalogs(tmp_path):
    with pytest.raises(ScenarioError, match="max_replicas"):
        load_vnfs(write_json(tmp_path / "v.json", [{"name": "A", "cores_per_gbps": 1, "max_replicas": 0}]))
    vnfs = {"A": VnfSpec("A", 1, 1)}
    with pytest.raises(ScenarioError, match="unknown VNF"):
        load_chains(write_json(tmp_path / "c.json", [{"id": "c", "vnfs": ["B"], "instances": 1}]), vnfs)
    with pytest.raises(ScenarioError, match="non-empty"):
        load_chains(write_json(tmp_path / "c2.json", [{"id": "c", "vnfs": [], "instances": 1}]), vnfs)


@pytest.mark.parametrize("body, fragment", [
    ("chain,src,dst,gbps\nbasic,0,0,1\n", "src equals dst"),
    ("chain,src,dst,gbps\nbasic,0,1,-1\n", "non-positive"),
    ("chain,src,dst,gbps\nnope,0,1,1\n", "unknown chain"),
    ("chain,src,dst,gbps\nbasic,0,9,1\n", "unknown node"),
    ("chain,src,dst,gbps\nbasic,0,1,1\nbasic,0,1,2\n", "duplicate"),
    ("chain,src,dst,gbps\n", "no demands"),
    ("a,b,c\n1,2,3\n", "header"),
    ("chain,src,dst,gbps\nbasic,x,1,1\n", "malformed"),
])
def test_bad_traffic(tmp_path, body, fragment):
    vnfs = load_vnfs(data_file("vnfs.json"))
    chains = load_chains(data_file("chains_small.json"), vnfs)
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(ScenarioError, match=fragment):
        load_traffic(p, chains, 4)


def test_traffic_round_trip(tmp_path):
    sc = fixture_scenario(5)
    write_traffic(tmp_path / "t.csv", sc.demands)
    again = load_traffic(tmp_path / "t.csv", sc.chains, sc.net.num_nodes)
    assert again == sc.demands


def test_load_scenario_and_overrides():
    sc = load_scenario(data_file("net4.json"), data_file("vnfs.json"), data_file("chains_small.json"),
                       data_file("traffic_net4.csv"))
    assert sc.name == "net4" and len(sc.demands) == 4
    assert all(c.instances == 3 for c in sc.with_instances(3).chains)
    assert all(v.max_replicas == 2 for v in sc.with_replicas(2).vnfs.values())
    only = sc.with_replicas({"FW": 1})
    assert only.vnfs["FW"].max_replicas == 1 and only.vnfs["NAT"].max_replicas == sc.vnfs["NAT"].max_replicas
    assert sc.vnf_names == ("NAT", "FW")


def test_core_rounding():
    assert VnfSpec("x", 0.1, 1).cores_for(3.0) == 1
    assert VnfSpec("x", 1.0, 1).cores_for(2.5) == 3
    assert VnfSpec("x", 0.0, 1).cores_for(7.0) == 0


def test_demand_set_invariants():
    with pytest.raises(ScenarioError):
        DemandSet([Demand("c", 0, 1, 1.0), Demand("c", 0, 1, 2.0)])
    ds = DemandSet([Demand("c", 0, 1, 1.0), Demand("d", 1, 0, 2.0)])
    assert ds.total == 3.0 and ds.for_chain("d") == (Demand("d", 1, 0, 2.0),)
    net = build_network(2, [(0, 1)])
    with pytest.raises(ScenarioError, match="unknown chain"):
        Scenario(net, {"A": VnfSpec("A", 1, 1)}, (ChainSpec("c", ("A",)),), [Demand("x", 0, 1, 1.0)])


@pytest.fixture
def solved():
    sc = fixture_scenario(4)
    return sc, solve_enum_ilp(sc, sc.net.num_nodes, p_paths=2)


def test_validator_accepts_solver_output_and_json_round_trip(solved, tmp_path):
    sc, sol = solved
    assert validate_solution(sc, sol, sc.net.num_nodes).feasible
    sol.to_json(tmp_path / "s.json")
    back = MappingSolution.from_json(tmp_path / "s.json").compute_totals(sc)
    assert back.objective == pytest.approx(sol.objective)
    assert validate_solution(sc, back, sc.net.num_nodes).feasible


def test_validator_flags_each_family(solved):
    sc, sol = solved
    K = sc.net.num_nodes
    key = next(iter(sol.assignment))

    broken = replace(sol, access={**sol.access, key: (0, 0, 0)})
    assert "access-route" in validate_solution(sc, broken, K).families()

    broken = replace(sol, assignment={k: v for k, v in sol.assignment.items() if k != key})
    assert "coverage" in validate_solution(sc, broken, K).families()

    tight = sc.replace(net=sc.net.with_capacity(0.5))
    assert "link-capacity" in validate_solution(tight, sol, K).families()

    starved = sc.replace(net=sc.net.with_nodes(cores=1))
    assert "node-cores" in validate_solution(starved, sol, K).families()

    broken = replace(sol, solver_objective=sol.objective + 1)
    assert "objective" in validate_solution(sc, broken, K).families()

    bad_cfg = Configuration(sol.configurations[0].chain_id, (0, 2), ((0,),), sol.configurations[0].load)
    broken = replace(sol, configurations=[bad_cfg] + sol.configurations[1:])
    assert "configuration" in validate_solution(sc, broken, K).families()


def test_validator_counts_hosts_and_replicas():
    net = build_network(3, [(0, 1), (1, 2)])
    vnfs = {"A": VnfSpec("A", 1, 1), "B": VnfSpec("B", 1, 5)}
    sc = Scenario(net, vnfs, (ChainSpec("c", ("A", "B"), 2),),
                  [Demand("c", 0, 2, 1.0), Demand("c", 2, 0, 1.0)])
    c1 = Configuration("c", (0, 1), ((net.arc_between(0, 1),),), 1.0)
    c2 = Configuration("c", (2, 2), ((),), 1.0)
    sol = MappingSolution([c1, c2], {("c", 0, 2): 0, ("c", 2, 0): 1},
                          {("c", 0, 2): (), ("c", 2, 0): ()},
                          {("c", 0, 2): (net.arc_between(1, 2),),
                           ("c", 2, 0): (net.arc_between(2, 1), net.arc_between(1, 0))})
    rep = validate_solution(sc, sol.compute_totals(sc), K=2)
    assert rep.families() == {"vnf-replicas", "nfv-node-budget"}
    rep = validate_solution(sc, sol, K=3, budgets={"c": 1})
    assert "instance-budget" in rep.families()
