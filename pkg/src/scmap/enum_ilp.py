"""Exact method: enumerate every configuration up front and solve one ILP."""

from __future__ import annotations

import itertools
import json
import math
import time
from math import comb
from typing import Iterator, Sequence

from .master import FlowMaster, InfeasibleModelError
from .milp import INFEASIBLE, LIMIT, OPTIMAL
from .network import ChainSpec, Demand, NetworkModel, Scenario
from .paths import PathCache
from .solution import Configuration, MappingSolution

DEFAULT_P_PATHS = 3
DEFAULT_CAP = 200_000


class EnumerationLimitError(RuntimeError):
    """Configuration universe larger than the cap."""


def count_configurations(chain: ChainSpec, demands: Sequence[Demand], net: NetworkModel, p_paths: int) -> int:
    """Closed-form size of the configuration universe for one chain.

    sum over flow-subset sizes of C(N_sd, sd), times one NFV node per VNF,
    times ``p_paths`` path choices between consecutive VNFs. This counts
    every placement, reachable or not, so it bounds what
    ``enumerate_configurations`` emits.
    """
    if p_paths < 1:
        raise ValueError("p_paths must be >= 1")
    n_sd = sum(1 for d in demands if d.chain == chain.id)
    subsets = sum(comb(n_sd, k) for k in range(1, n_sd + 1))
    return subsets * len(net.nfv_nodes) ** chain.length * p_paths ** (chain.length - 1)


def _placement_routes(chain: ChainSpec, net: NetworkModel, paths: PathCache) -> list[tuple[tuple[int, ...], list[list[tuple[int, ...]]]]]:
    out = []
    for placement in itertools.product(net.nfv_nodes, repeat=chain.length):
        options = [paths(u, w) for u, w in zip(placement, placement[1:])]
        if any(not o for o in options):
            continue
        out.append((placement, options))
    return out


def structural_count(chain: ChainSpec, demands: Sequence[Demand], net: NetworkModel, p_paths: int,
                     paths: PathCache | None = None) -> int:
    """Number of configurations ``enumerate_configurations`` would emit."""
    paths = paths or PathCache(net, p_paths)
    n_sd = sum(1 for d in demands if d.chain == chain.id)
    per_subset = sum(math.prod(len(o) for o in opts) for _, opts in _placement_routes(chain, net, paths))
    return (2 ** n_sd - 1) * per_subset


def iter_configurations(chain: ChainSpec, demands: Sequence[Demand], net: NetworkModel, p_paths: int,
                        paths: PathCache | None = None) -> Iterator[Configuration]:
    paths = paths or PathCache(net, p_paths)
    own = sorted((d for d in demands if d.chain == chain.id), key=lambda d: d.pair)
    routes = _placement_routes(chain, net, paths)
    for size in range(1, len(own) + 1):
        for subset in itertools.combinations(own, size):
            load = sum(d.gbps for d in subset)
            flows = frozenset(d.pair for d in subset)
            for placement, options in routes:
                for segs in itertools.product(*options):
                    yield Configuration(chain.id, placement, segs, load, flows)


def enumerate_configurations(chain: ChainSpec, demands: Sequence[Demand], net: NetworkModel,
                             p_paths: int = DEFAULT_P_PATHS, cap: int = DEFAULT_CAP) -> list[Configuration]:
    """All structurally valid configurations of ``chain``.

    Flow subsets are ordered by size then lexicographically; inter-VNF paths
    come from the ``p_paths`` shortest loopless paths.
    """
    paths = PathCache(net, p_paths)
    n = structural_count(chain, demands, net, p_paths, paths)
    if n > cap:
        raise EnumerationLimitError(
            f"chain {chain.id}: {n} configurations exceed the cap of {cap}; enumeration infeasible, use CG")
    return list(iter_configurations(chain, demands, net, p_paths, paths))


def solve_enum_ilp(scenario: Scenario, K: int, p_paths: int = DEFAULT_P_PATHS, cap: int = DEFAULT_CAP,
                   time_limit: float | None = None, budgets: dict[str, int] | None = None,
                   dump_path=None) -> MappingSolution:
    """Build the full configuration set and solve the monolithic ILP."""
    t0 = time.perf_counter()
    if not scenario.demands:
        raise ValueError("no demands")
    pools = []
    total = 0
    for chain in scenario.active_chains:
        paths = PathCache(scenario.net, p_paths)
        n = structural_count(chain, scenario.demands, scenario.net, p_paths, paths)
        total += n
        if total > cap:
            raise EnumerationLimitError(
                f"{total}+ configurations exceed the cap of {cap}; enumeration infeasible, use CG")
        pools.append(iter_configurations(chain, scenario.demands, scenario.net, p_paths, paths))
    master = FlowMaster(scenario, K, budgets, artificial=False)
    for pool in pools:
        for cfg in pool:
            master.add_configuration(cfg)
    if dump_path is not None:
        with open(dump_path, "w", encoding="utf-8") as fh:
            json.dump([c.to_dict() for c in master.columns], fh)
    lp = master.solve_relaxation()
    sol = master.solve_integer(time_limit=time_limit)
    if sol.status == INFEASIBLE or not sol.has_solution:
        if sol.status == LIMIT:
            raise TimeoutError("enum-ilp: time limit reached without an incumbent")
        raise InfeasibleModelError("enum-ilp: model infeasible", master.diagnose_infeasibility(time_limit))
    out = master.extract(sol, method="enum-ilp", status=sol.status if sol.status != OPTIMAL else "optimal",
                         lp_objective=lp.objective if lp.optimal else math.nan)
    out.runtime = time.perf_counter() - t0
    out.meta.update(configurations=len(master.columns), p_paths=p_paths, K=K)
    return out
