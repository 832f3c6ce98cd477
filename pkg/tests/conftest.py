import itertools
import random

import pytest

from scmap.cli import data_file
from scmap.milp import HEALTH
from scmap.network import (ChainSpec, Demand, DemandSet, Scenario, VnfSpec, build_network, load_chains,
                           load_topology, load_traffic, load_vnfs)


def random_instance(seed, *, max_nodes=5, max_pairs=3, max_len=2, loose=False):
    """Small connected instance plus a K; tight variants draw small capacities and core counts."""
    rng = random.Random(seed)
    n = rng.randint(3, max_nodes)
    links = set()
    for i in range(1, n):
        links.add((rng.randrange(i), i))
    for u, v in itertools.combinations(range(n), 2):
        if rng.random() < 0.3:
            links.add((u, v))
    nfv = [v for v in range(n) if rng.random() < 0.7] or [rng.randrange(n)]
    if loose:
        cap, cores = 1e6, [10**6] * n
    else:
        cap = rng.choice([1e6, 4.0, 3.0])
        cores = [rng.choice([10**6, 4, 6]) for _ in range(n)]
    net = build_network(n, sorted(links), capacity=cap, cores=cores, nfv=nfv)
    vnfs = {"A": VnfSpec("A", 1.0, rng.choice([1, 2, 5])), "B": VnfSpec("B", 0.5, rng.choice([1, 5]))}
    length = rng.randint(1, max_len)
    chain = ChainSpec("c", ("A", "B")[:length], rng.randint(1, 3))
    pairs = rng.sample([(s, d) for s in range(n) for d in range(n) if s != d], rng.randint(1, max_pairs))
    dem = DemandSet([Demand("c", s, d, float(rng.choice([1, 1.5, 2]))) for s, d in pairs])
    return Scenario(net, vnfs, (chain,), dem, name=f"rand{seed}"), rng.randint(1, n)


def fixture_scenario(n):
    vnfs = load_vnfs(data_file("vnfs.json"))
    chains = load_chains(data_file("chains_small.json"), vnfs)
    net = load_topology(data_file(f"net{n}.json"))
    dem = load_traffic(data_file(f"traffic_net{n}.csv"), chains, net.num_nodes)
    return Scenario(net, vnfs, chains, dem, name=f"net{n}")


def all_to_all_scenario(topology, chain_id="video", gbps=1.0):
    vnfs = load_vnfs(data_file("vnfs.json"))
    chains = tuple(c for c in load_chains(data_file("chains.json"), vnfs) if c.id == chain_id)
    net = load_topology(data_file(f"{topology}.json"))
    dem = DemandSet([Demand(chain_id, s, d, gbps) for s in range(net.num_nodes) for d in range(net.num_nodes)
                     if s != d])
    return Scenario(net, vnfs, chains, dem, name=topology)


@pytest.fixture(params=[4, 5, 6], ids=lambda n: f"net{n}")
def small_fixture(request):
    return fixture_scenario(request.param)


def pytest_collection_modifyitems(config, items):
    # the health criterion summarises every LP solved in the session, so it runs last
    last = [it for it in items if it.name == "test_10_solver_health"]
    items[:] = [it for it in items if it.name != "test_10_solver_health"] + last


@pytest.fixture(scope="session", autouse=True)
def solver_health():
    """Every LP solved anywhere in the session must carry a clean optimality certificate."""
    HEALTH.reset()
    yield HEALTH
    assert not HEALTH.failures, f"LP certificates outside tolerance: {HEALTH.failures[:5]}"
