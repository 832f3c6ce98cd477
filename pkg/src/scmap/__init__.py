"""Bandwidth-minimal service chain mapping on NFV backbones.

Exact solvers (full enumeration, column generation with quadratic pricing),
the two-phase group heuristic, the all-shortest-path bound and an
exhaustive oracle, plus an experiment harness.
"""

from .baselines import SearchSpaceError, asp_bandwidth, brute_force_opt
from .cg_quadratic import run_cg_ilp
from .enum_ilp import EnumerationLimitError, count_configurations, enumerate_configurations, solve_enum_ilp
from .master import InfeasibleModelError
from .network import (ChainSpec, Demand, DemandSet, NetworkModel, Scenario, ScenarioError, VnfSpec, build_network,
                      load_chains, load_scenario, load_topology, load_traffic, load_vnfs)
from .solution import Configuration, MappingSolution, validate_solution
from .two_phase import run_two_phase, solve_phase2, sptg

__version__ = "0.1.0"

__all__ = [
    "ChainSpec", "Configuration", "Demand", "DemandSet", "EnumerationLimitError", "InfeasibleModelError",
    "MappingSolution", "NetworkModel", "Scenario", "ScenarioError", "SearchSpaceError", "VnfSpec",
    "asp_bandwidth", "brute_force_opt", "build_network", "count_configurations", "enumerate_configurations",
    "load_chains", "load_scenario", "load_topology", "load_traffic", "load_vnfs", "run_cg_ilp",
    "run_two_phase", "solve_enum_ilp", "solve_phase2", "sptg", "validate_solution",
]
