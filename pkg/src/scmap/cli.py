"""Command-line entry point: ``scmap run | sweep | validate | compare``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import harness
from .baselines import SearchSpaceError
from .enum_ilp import DEFAULT_P_PATHS, EnumerationLimitError
from .master import InfeasibleModelError
from .network import (DemandSet, Scenario, ScenarioError, load_chains, load_topology, load_traffic, load_vnfs)
from .solution import MappingSolution, validate_solution

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_LIMIT = 0, 1, 2, 3

log = logging.getLogger("scmap")


def data_file(name: str) -> Path:
    """Path of a bundled data file (topologies, catalogs, fixture traffic)."""
    return Path(str(resources.files("scmap") / "data" / name))


def _resolve(arg: str, suffix: str) -> Path:
    # a bare name like "nsfnet" falls back to the bundled file of that name
    p = Path(arg)
    if p.exists():
        return p
    bundled = data_file(arg if arg.endswith(suffix) else arg + suffix)
    return bundled if bundled.exists() else p


def parse_groups(text: str | None):
    """``video=10,web=3`` -> dict; ``7`` -> int; ``auto:60`` -> ("auto", 60)."""
    if text is None:
        return None
    if text.startswith("auto:"):
        return ("auto", int(text.split(":", 1)[1]))
    if "=" not in text:
        return int(text)
    out = {}
    for part in text.split(","):
        chain, _, n = part.partition("=")
        out[chain.strip()] = int(n)
    return out


def parse_range(text: str) -> list[float]:
    """``a:b:step`` inclusive, or a comma list."""
    if "," in text or ":" not in text:
        return [float(x) for x in text.split(",") if x]
    parts = [float(x) for x in text.split(":")]
    if len(parts) == 2:
        parts.append(1.0)
    a, b, step = parts
    if step <= 0:
        raise ValueError("range step must be positive")
    vals, x = [], a
    while x <= b + 1e-9:
        vals.append(round(x, 9))
        x += step
    return vals


def build_scenario(args) -> Scenario:
    net = load_topology(_resolve(args.topology, ".json"))
    vnfs = load_vnfs(_resolve(args.vnfs, ".json"))
    chains = load_chains(_resolve(args.chains, ".json"), vnfs)
    if args.chain:
        keep = set(args.chain)
        missing = keep - {c.id for c in chains}
        if missing:
            raise ScenarioError(f"unknown chain(s) {sorted(missing)}", args.chains)
        chains = tuple(c for c in chains if c.id in keep)
    if args.traffic:
        demands = load_traffic(_resolve(args.traffic, ".csv"), chains, net.num_nodes)
    elif args.all_to_all is not None:
        demands = DemandSet([d for c in chains for d in harness.all_to_all(net, c.id, args.all_to_all)])
    else:
        raise ScenarioError("give --traffic or --all-to-all", "<args>")
    sc = Scenario(net, vnfs, chains, demands, name=Path(args.topology).stem)
    if args.replicas is not None:
        sc = sc.with_replicas(args.replicas)
    if args.instances is not None:
        sc = sc.with_instances(args.instances)
    return sc


def _method_kwargs(args) -> dict:
    kw = {}
    if args.method == "two-phase":
        kw["cluster_rule"] = args.cluster_rule
    if args.method == "enum-ilp" and args.cap is not None:
        kw["cap"] = args.cap
    return kw


def _print_result(r: harness.RunResult) -> None:
    print(f"method      {r.method}")
    print(f"objective   {r.objective:.6f}")
    if r.lp_objective == r.lp_objective:
        print(f"lp bound    {r.lp_objective:.6f}")
    print(f"status      {r.status}")
    print(f"runtime     {r.runtime:.3f} s")
    if r.solution is not None:
        print(f"nfv nodes   {list(r.nfv_nodes_used)}")
        print(f"cores       {r.total_cores} total, {dict(sorted(r.cores_per_node.items()))}")
        print(f"instances   {r.instances}")
        print(f"validation  {'feasible' if r.feasible else 'INFEASIBLE'}")
        for v in r.violations[:10]:
            print(f"  {v}")


def cmd_run(args) -> int:
    sc = build_scenario(args)
    K = args.K if args.K is not None else sc.net.num_nodes
    groups = parse_groups(args.groups)
    out = Path(args.out) if args.out else None
    if isinstance(groups, tuple):
        n_star, curve = harness.find_n_star(sc, K, groups[1], eps=args.eps, time_limit=args.time_limit,
                                            cluster_rule=args.cluster_rule)
        print(f"N* = {n_star if n_star is not None else 'not reached'}")
        if not curve:
            raise ValueError("empty group sweep")
        result = curve[-1][1]
        if out:
            pts = [harness.SweepPoint("instances", n, r) for n, r in curve]
            harness.emit_report(out, sweeps={"groups": pts})
    else:
        result = harness.run(args.method, sc, K, groups=groups, p_paths=args.p_paths, eps=args.eps,
                             time_limit=args.time_limit, **_method_kwargs(args))
    _print_result(result)
    if out:
        out.mkdir(parents=True, exist_ok=True)
        harness.emit_report(out, results=[result])
        if result.solution is not None:
            result.solution.to_json(out / "solution.json")
        extra = result.extra
        if extra is not None and hasattr(extra, "write_trace"):
            extra.write_trace(out / "trace.csv")
        if extra is not None and hasattr(extra, "write_partition"):
            extra.write_partition(out / "partition.json")
    if result.feasible is False:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = build_scenario(args)
    K = args.K if args.K is not None else sc.net.num_nodes
    weights = harness.load_weights(args.skew, sc.net.num_nodes) if args.skew else None
    groups = parse_groups(args.groups)
    if isinstance(groups, tuple):
        groups = None
    points = harness.sweep(args.axis, parse_range(args.range), sc, method=args.method, K=K, groups=groups,
                           vnfs_for_r=args.vnf or None, trials=args.trials, seed=args.seed, weights=weights,
                           max_groups=args.max_groups, eps=args.eps, time_limit=args.time_limit,
                           **_method_kwargs(args))
    out = Path(args.out or ".")
    for path in harness.emit_report(out, sweeps={args.axis: points}):
        print(path)
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = build_scenario(args)
    sol = MappingSolution.from_json(args.solution)
    K = args.K if args.K is not None else sc.net.num_nodes
    report = validate_solution(sc, sol.compute_totals(sc), K, budgets=sol.budgets or None)
    print(report)
    print(f"objective {sol.objective:.6f}")
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_compare(args) -> int:
    """All methods on the bundled 4/5/6-node fixtures at K = |V|."""
    vnfs = load_vnfs(data_file("vnfs.json"))
    chains = load_chains(data_file("chains_small.json"), vnfs)
    scenarios = []
    for n in (4, 5, 6):
        net = load_topology(data_file(f"net{n}.json"))
        dem = load_traffic(data_file(f"traffic_net{n}.csv"), chains, net.num_nodes)
        scenarios.append(Scenario(net, vnfs, chains, dem, name=f"net{n}"))
    results = harness.compare(scenarios, methods=args.methods, p_paths=args.p_paths, eps=args.eps)
    print(harness.summary_table(results), end="")
    if args.out:
        harness.emit_report(args.out, results=results)
    return EXIT_OK


def _scenario_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario")
    g.add_argument("--topology", required=True, help="topology JSON (or a bundled name: nsfnet, cost239, net4..net6)")
    g.add_argument("--vnfs", default="vnfs", help="VNF catalog JSON (default: bundled)")
    g.add_argument("--chains", default="chains", help="chain catalog JSON (default: bundled)")
    g.add_argument("--chain", action="append", help="keep only this chain (repeatable)")
    g.add_argument("--traffic", help="demand CSV with header chain,src,dst,gbps")
    g.add_argument("--all-to-all", type=float, metavar="GBPS", help="every ordered pair demands GBPS per chain")
    g.add_argument("-K", type=int, help="NFV node budget (default |V|)")
    g.add_argument("--replicas", type=int, help="override every VNF's replica limit")
    g.add_argument("--instances", type=int, help="override every chain's instance budget")


def _solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=harness.METHODS, default="two-phase")
    p.add_argument("--groups", help="two-phase groups: N, chain=N[,chain=N], or auto:MAX")
    p.add_argument("--cluster-rule", default="shared-link", choices=("shared-link", "endpoints"))
    p.add_argument("--p-paths", type=int, default=DEFAULT_P_PATHS)
    p.add_argument("--cap", type=int, help="enum-ilp configuration cap")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--time-limit", type=float)
    p.add_argument("--out", help="output directory")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scmap", description="Service chain mapping solvers and experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="solve one scenario")
    _scenario_args(p)
    _solver_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="vary one parameter")
    _scenario_args(p)
    _solver_args(p)
    p.add_argument("--axis", required=True, choices=harness.AXES)
    p.add_argument("--range", required=True, help="a:b[:step] or a comma list")
    p.add_argument("--vnf", action="append", help="R axis: restrict this VNF only (repeatable)")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skew", help="node weights JSON for population-skewed sampling")
    p.add_argument("--max-groups", type=int, help="fullness axis: largest N_c tried")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a solution JSON against a scenario")
    _scenario_args(p)
    p.add_argument("--solution", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="every method on the bundled small fixtures")
    p.add_argument("--methods", nargs="+", default=["asp", "enum-ilp", "cg-ilp", "two-phase"],
                   choices=harness.METHODS)
    p.add_argument("--p-paths", type=int, default=DEFAULT_P_PATHS)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InfeasibleModelError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (EnumerationLimitError, SearchSpaceError, TimeoutError) as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except (ScenarioError, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
