"""Experiment driver: single runs, parameter sweeps, and report files."""

from __future__ import annotations

import csv
import json
import math
import random
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .baselines import asp_bandwidth, brute_force_opt
from .cg_quadratic import run_cg_ilp
from .enum_ilp import DEFAULT_P_PATHS, solve_enum_ilp
from .network import ChainSpec, Demand, DemandSet, NetworkModel, Scenario
from .solution import MappingSolution, validate_solution
from .two_phase import run_two_phase, solve_phase2, sptg

METHODS = ("enum-ilp", "cg-ilp", "two-phase", "asp", "brute")
AXES = ("instances", "K", "R", "fullness")
ASP_REL_TOL = 1e-6


@dataclass
class RunResult:
    method: str
    scenario: str
    objective: float
    runtime: float
    status: str = "optimal"
    lp_objective: float = math.nan
    nfv_nodes_used: tuple[int, ...] = ()
    cores_per_node: dict[int, int] = field(default_factory=dict)
    arc_load: dict[int, float] = field(default_factory=dict)
    instances: dict[str, int] = field(default_factory=dict)
    feasible: bool | None = None
    violations: list[str] = field(default_factory=list)
    solution: MappingSolution | None = None
    extra: object = None  # method-specific (trace, partitions, pool)

    @property
    def total_cores(self) -> int:
        return sum(self.cores_per_node.values())

    def row(self) -> dict:
        """CSV-ready fields; wall time is left out so reruns compare byte for byte."""
        return {
            "method": self.method,
            "scenario": self.scenario,
            "objective": _num(self.objective),
            "lp_objective": _num(self.lp_objective),
            "status": self.status,
            "nfv_nodes": len(self.nfv_nodes_used),
            "total_cores": self.total_cores,
            "instances": ";".join(f"{c}={n}" for c, n in sorted(self.instances.items())),
            "feasible": "" if self.feasible is None else str(self.feasible).lower(),
        }


def _num(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    x = float(x)
    return repr(round(x, 9))


def _from_solution(method: str, scenario: Scenario, sol: MappingSolution, K: int, extra=None) -> RunResult:
    report = validate_solution(scenario, sol, K, budgets=sol.budgets or None)
    return RunResult(method, scenario.name, sol.objective, sol.runtime, sol.status, sol.lp_objective,
                     sol.nfv_nodes_used, dict(sol.cores_per_node), dict(sol.arc_load), sol.instances_per_chain(),
                     report.feasible, [str(v) for v in report.violations], sol, extra)


def run(method: str, scenario: Scenario, K: int, *, groups: Mapping[str, int] | int | None = None,
        p_paths: int = DEFAULT_P_PATHS, eps: float = 1e-6, time_limit: float | None = None,
        pool=(), **kw) -> RunResult:
    """Run one method on one scenario and validate the result.

    ``groups`` is the per-chain group count for ``two-phase`` (default: each
    chain's instance budget); the exact methods read I_c from the chains.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    t0 = time.perf_counter()
    try:
        if method == "asp":
            asp = asp_bandwidth(scenario.net, scenario.demands)
            return RunResult("asp", scenario.name, asp.value, time.perf_counter() - t0, extra=asp)
        if method == "brute":
            sol = brute_force_opt(scenario, K, p_paths=p_paths)
            return _from_solution(method, scenario, sol, K)
        if method == "enum-ilp":
            sol = solve_enum_ilp(scenario, K, p_paths=p_paths, time_limit=time_limit, **kw)
            return _from_solution(method, scenario, sol, K)
        if method == "cg-ilp":
            res = run_cg_ilp(scenario, K, eps=eps, time_limit=time_limit, **kw)
            return _from_solution(method, scenario, res.solution, K, res)
        if groups is None:
            groups = {c.id: c.instances for c in scenario.active_chains}
        res = run_two_phase(scenario, groups, K, eps=eps, time_limit=time_limit, pool=pool, **kw)
        return _from_solution(method, scenario, res.solution, K, res)
    except Exception as exc:
        exc.args = (f"{method}: {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])
        raise


# --- scenario helpers -------------------------------------------------------------


def all_to_all(net: NetworkModel, chain_id: str, gbps: float = 1.0, pairs: Iterable[tuple[int, int]] | None = None) -> list[Demand]:
    if pairs is None:
        pairs = [(s, d) for s in range(net.num_nodes) for d in range(net.num_nodes) if s != d]
    return [Demand(chain_id, s, d, gbps) for s, d in pairs]


def table1_scenario(net: NetworkModel, vnfs, chains: Sequence[ChainSpec], shares: Mapping[str, float],
                    total_gbps: float = 1000.0, name: str = "multi-chain") -> Scenario:
    """All-to-all traffic for every chain, chain c carrying ``shares[c]`` of ``total_gbps``."""
    pairs = [(s, d) for s in range(net.num_nodes) for d in range(net.num_nodes) if s != d]
    demands = []
    for c in chains:
        share = shares.get(c.id, 0.0)
        if share > 0:
            demands += all_to_all(net, c.id, share * total_gbps / len(pairs), pairs)
    return Scenario(net, vnfs, tuple(chains), DemandSet(demands), name=name)


def chain_shares(path) -> dict[str, float]:
    """Traffic shares from the optional ``share`` field of a chain catalog."""
    with open(path, encoding="utf-8") as fh:
        return {rec["id"]: float(rec["share"]) for rec in json.load(fh) if "share" in rec}


def load_weights(path, num_nodes: int) -> list[float]:
    """Node weights from JSON: a list, or an object keyed by node id."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, list):
        weights = [float(w) for w in doc]
    else:
        weights = [float(doc.get(str(v), doc.get(v, 0.0))) for v in range(num_nodes)]
    if len(weights) != num_nodes or any(w < 0 for w in weights) or not any(weights):
        raise ValueError(f"weights must be {num_nodes} non-negative numbers, not all zero")
    return weights


def sample_demands(demands: Sequence[Demand], fraction: float, rng: random.Random,
                   weights: Sequence[float] | None = None) -> list[Demand]:
    """Keep ``fraction`` of the pairs (at least one), chosen uniformly.

    With ``weights`` the kept demands are rescaled proportionally to
    w_s * w_d while preserving their total volume.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    pool = sorted(demands, key=lambda d: d.key)
    k = max(1, round(fraction * len(pool)))
    kept = sorted(rng.sample(pool, k), key=lambda d: d.key)
    if weights is None:
        return kept
    raw = [weights[d.src] * weights[d.dst] for d in kept]
    if not any(raw):
        return kept
    total = sum(d.gbps for d in kept)
    scale = total / sum(raw)
    return [Demand(d.chain, d.src, d.dst, r * scale) for d, r in zip(kept, raw) if r > 0]


# --- sweeps ------------------------------------------------------------------------


@dataclass
class SweepPoint:
    axis: str
    x: float
    result: RunResult | None = None
    stats: dict = field(default_factory=dict)


def reaches_asp(objective: float, asp: float) -> bool:
    return objective <= asp * (1 + ASP_REL_TOL) + 1e-12


def find_n_star(scenario: Scenario, K: int, max_groups: int | None = None, *, start: int = 1,
                on_point: Callable | None = None, **kw) -> tuple[int | None, list[tuple[int, RunResult]]]:
    """Smallest common group count N_c whose two-phase objective matches ASP.

    Returns (None, curve) when no N_c up to ``max_groups`` gets there.
    """
    asp = asp_bandwidth(scenario.net, scenario.demands).value
    most = max(len(scenario.demands.for_chain(c.id)) for c in scenario.active_chains)
    top = most if max_groups is None else min(max_groups, most)
    curve = []
    for n in range(start, top + 1):
        res = run("two-phase", scenario, K, groups=n, **kw)
        curve.append((n, res))
        if on_point is not None:
            on_point(n, res)
        if reaches_asp(res.objective, asp):
            return n, curve
    return None, curve


def sweep(axis: str, values: Sequence[float], scenario: Scenario, *, method: str = "two-phase", K: int = 1,
          groups: Mapping[str, int] | int | None = None, vnfs_for_r: Sequence[str] | None = None,
          trials: int = 1, seed: int = 0, weights: Sequence[float] | None = None,
          max_groups: int | None = None, **kw) -> list[SweepPoint]:
    """Vary one parameter and run ``method`` at every value.

    instances: I_c (exact methods) or N_c (two-phase) for every chain.
    K: the NFV node budget. R: the replica limit of ``vnfs_for_r`` (default
    all VNFs). fullness: percentage of demand pairs kept; each trial samples
    afresh and reports the smallest N_c reaching ASP (two-phase) with its
    mean/min/max over trials. Two-phase K and R sweeps reuse the column
    pool of the previous point, so their objectives cannot increase.
    """
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; choose from {', '.join(AXES)}")
    if not values:
        raise ValueError("empty sweep range")
    points = []
    pool: list = []
    for x in values:
        if axis == "instances":
            n = int(x)
            sc = scenario.with_instances(n)
            res = run(method, sc, K, groups=n, **kw)
        elif axis == "K":
            res = run(method, scenario, int(x), groups=groups, pool=pool, **kw) if method == "two-phase" \
                else run(method, scenario, int(x), **kw)
        elif axis == "R":
            names = vnfs_for_r or list(scenario.vnfs)
            sc = scenario.with_replicas({f: int(x) for f in names})
            res = run(method, sc, K, groups=groups, pool=pool, **kw) if method == "two-phase" \
                else run(method, sc, K, **kw)
        else:
            points.append(_fullness_point(float(x), scenario, K, trials, seed, weights, max_groups, **kw))
            continue
        if method == "two-phase" and res.extra is not None:
            pool = res.extra.pool
        points.append(SweepPoint(axis, x, res))
    return points


def _fullness_point(pct: float, scenario: Scenario, K: int, trials: int, seed: int,
                    weights, max_groups, **kw) -> SweepPoint:
    n_stars, bws = [], []
    for t in range(trials):
        rng = random.Random(f"{seed}:{pct}:{t}")
        kept = sample_demands(list(scenario.demands), pct / 100.0, rng, weights)
        sc = scenario.replace(demands=DemandSet(kept))
        n, curve = find_n_star(sc, K, max_groups, **kw)
        n_stars.append(n if n is not None else math.nan)
        bws.append(curve[-1][1].objective)
    finite = [v for v in n_stars if not math.isnan(v)]
    stats = {
        "trials": trials,
        "n_star_mean": statistics.fmean(finite) if finite else math.nan,
        "n_star_min": min(finite) if finite else math.nan,
        "n_star_max": max(finite) if finite else math.nan,
        "unreached": len(n_stars) - len(finite),
        "bandwidth_mean": statistics.fmean(bws),
        "bandwidth_min": min(bws),
        "bandwidth_max": max(bws),
    }
    return SweepPoint("fullness", pct, None, stats)


# --- reporting ---------------------------------------------------------------------


def write_sweep_csv(path, points: Sequence[SweepPoint]) -> None:
    if not points:
        raise ValueError("no sweep points")
    if points[0].result is None:
        fields = ["axis", "x"] + list(points[0].stats)
        rows = [{"axis": p.axis, "x": _num(p.x), **{k: _num(v) if isinstance(v, float) else v
                                                     for k, v in p.stats.items()}} for p in points]
    else:
        fields = ["axis", "x"] + list(points[0].result.row())
        rows = [{"axis": p.axis, "x": _num(p.x), **p.result.row()} for p in points]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_plot_data(path, series: Mapping[str, Sequence[tuple[float, float]]]) -> None:
    """Whitespace-separated blocks, one per series: ``# name`` then ``x y`` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for name, pts in series.items():
            fh.write(f"# {name}\n")
            for x, y in pts:
                fh.write(f"{_num(x)} {_num(y)}\n")
            fh.write("\n")


def summary_table(results: Sequence[RunResult]) -> str:
    lines = [f"{'scenario':<16} {'method':<10} {'objective':>14} {'time_s':>10} {'status':<14} feasible"]
    for r in results:
        feas = "-" if r.feasible is None else ("yes" if r.feasible else "NO")
        lines.append(f"{r.scenario:<16} {r.method:<10} {r.objective:>14.6g} {r.runtime:>10.3f} {r.status:<14} {feas}")
    return "\n".join(lines) + "\n"


def emit_report(out_dir, *, sweeps: Mapping[str, Sequence[SweepPoint]] | None = None,
                results: Sequence[RunResult] = ()) -> list[Path]:
    """Write sweep CSVs, plot-data files and a summary table into ``out_dir``.

    Result rows that fail validation are refused rather than written.
    """
    sweeps = dict(sweeps or {})
    if not sweeps and not results:
        raise ValueError("empty result set")
    for r in list(results) + [p.result for pts in sweeps.values() for p in pts if p.result is not None]:
        if r.feasible is False:
            raise ValueError(f"{r.method} on {r.scenario} failed validation: {r.violations[:3]}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, points in sorted(sweeps.items()):
        p = out / f"sweep_{name}.csv"
        write_sweep_csv(p, points)
        written.append(p)
        if points and points[0].result is not None:
            series = {points[0].result.method: [(pt.x, pt.result.objective) for pt in points]}
        else:
            series = {"n_star_mean": [(pt.x, pt.stats["n_star_mean"]) for pt in points]}
        q = out / f"plot_{name}.dat"
        write_plot_data(q, series)
        written.append(q)
    if results:
        p = out / "results.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(results[0].row()), lineterminator="\n")
            w.writeheader()
            for r in results:
                w.writerow(r.row())
        written.append(p)
        by_method: dict[str, list[tuple[float, float]]] = {}
        for i, r in enumerate(results):
            by_method.setdefault(r.method, []).append((i, r.objective))
        q = out / "plot_comparison.dat"
        write_plot_data(q, by_method)
        written.append(q)
    all_results = list(results) + [p.result for pts in sweeps.values() for p in pts if p.result is not None]
    if all_results:
        s = out / "summary.txt"
        s.write_text(summary_table(all_results), encoding="utf-8")
        written.append(s)
    return written


def compare(scenarios: Sequence[Scenario], K: int | None = None,
            methods: Sequence[str] = ("asp", "enum-ilp", "cg-ilp", "two-phase"), **kw) -> list[RunResult]:
    """Every method on every scenario (K defaults to |V|)."""
    out = []
    for sc in scenarios:
        k = sc.net.num_nodes if K is None else K
        for m in methods:
            out.append(run(m, sc, k, **kw))
    return out
