import json
import random

import pytest

from conftest import fixture_scenario
from scmap import harness
from scmap.baselines import asp_bandwidth
from scmap.network import Demand


def test_run_asp_delegates():
    sc = fixture_scenario(5)
    r = harness.run("asp", sc, 5)
    assert r.objective == asp_bandwidth(sc.net, sc.demands).value
    assert r.feasible is None


def test_run_two_phase_record_is_validated():
    sc = fixture_scenario(6)
    r = harness.run("two-phase", sc, 6)
    assert r.feasible
    assert r.instances == {"basic": 1}
    assert r.total_cores == sum(r.cores_per_node.values()) > 0
    assert set(r.nfv_nodes_used) <= set(sc.net.nfv_nodes)
    assert sum(r.arc_load.values()) == pytest.approx(r.objective)


def test_run_unknown_method():
    with pytest.raises(ValueError, match="unknown method"):
        harness.run("greedy", fixture_scenario(4), 4)


def test_errors_carry_method_context():
    from scmap.enum_ilp import EnumerationLimitError

    with pytest.raises(EnumerationLimitError, match="^enum-ilp: "):
        harness.run("enum-ilp", fixture_scenario(6), 6, cap=5)


def test_sweeps_on_fixture(tmp_path):
    sc = fixture_scenario(6)
    n = len(sc.demands)
    pts = harness.sweep("instances", list(range(1, n + 1)), sc, K=6)
    assert [p.x for p in pts] == list(range(1, n + 1))
    pts_k = harness.sweep("K", [1, 2, 3], sc, groups=2)
    objs = [p.result.objective for p in pts_k]
    assert objs == sorted(objs, reverse=True)
    files = harness.emit_report(tmp_path, sweeps={"instances": pts, "K": pts_k})
    names = {f.name for f in files}
    assert {"sweep_instances.csv", "plot_instances.dat", "sweep_K.csv", "summary.txt"} <= names


def test_sweep_rejects_bad_axis_and_empty_range():
    sc = fixture_scenario(4)
    with pytest.raises(ValueError):
        harness.sweep("latency", [1], sc)
    with pytest.raises(ValueError):
        harness.sweep("K", [], sc)


def test_emit_report_empty():
    with pytest.raises(ValueError, match="empty"):
        harness.emit_report("/tmp/never", sweeps={}, results=[])


def test_emit_report_refuses_invalid_rows(tmp_path):
    sc = fixture_scenario(4)
    r = harness.run("two-phase", sc, 4)
    r.feasible = False
    with pytest.raises(ValueError, match="validation"):
        harness.emit_report(tmp_path, results=[r])


def test_reports_are_byte_identical(tmp_path):
    sc = fixture_scenario(5)

    def once(d):
        pts = harness.sweep("fullness", [50, 100], sc, K=5, trials=2, seed=7)
        harness.emit_report(d, sweeps={"fullness": pts})
        return (d / "sweep_fullness.csv").read_bytes()

    assert once(tmp_path / "a") == once(tmp_path / "b")


def test_sample_demands_uniform_and_skewed():
    dem = [Demand("c", s, d, 1.0) for s in range(5) for d in range(5) if s != d]
    kept = harness.sample_demands(dem, 0.5, random.Random(1))
    assert len(kept) == 10 and len({d.key for d in kept}) == 10
    w = [1, 1, 1, 1, 4]
    skewed = harness.sample_demands(dem, 1.0, random.Random(1), w)
    assert sum(d.gbps for d in skewed) == pytest.approx(20.0)
    heavy = [d.gbps for d in skewed if 4 in d.pair]
    light = [d.gbps for d in skewed if 4 not in d.pair]
    assert min(heavy) == pytest.approx(4 * max(light))
    with pytest.raises(ValueError):
        harness.sample_demands(dem, 0, random.Random(1))


def test_load_weights(tmp_path):
    p = tmp_path / "w.json"
    p.write_text(json.dumps({"0": 2, "2": 1}))
    assert harness.load_weights(p, 3) == [2.0, 0.0, 1.0]
    p.write_text(json.dumps([1, 2]))
    with pytest.raises(ValueError):
        harness.load_weights(p, 3)


def test_find_n_star_on_fixture():
    sc = fixture_scenario(4)
    n, curve = harness.find_n_star(sc, 4)
    asp = asp_bandwidth(sc.net, sc.demands).value
    assert n is not None and harness.reaches_asp(curve[-1][1].objective, asp)
    assert all(not harness.reaches_asp(r.objective, asp) for _, r in curve[:-1])


def test_table1_scenario_shares():
    from scmap.cli import data_file
    from scmap.network import load_chains, load_topology, load_vnfs

    vnfs = load_vnfs(data_file("vnfs.json"))
    chains = load_chains(data_file("chains.json"), vnfs)
    shares = harness.chain_shares(data_file("chains.json"))
    sc = harness.table1_scenario(load_topology(data_file("nsfnet.json")), vnfs, chains, shares, 1000.0)
    assert sc.demands.total == pytest.approx(1000.0)
    assert sum(d.gbps for d in sc.demands.for_chain("video")) == pytest.approx(698.0)
    assert len(sc.demands) == 4 * 182


def test_compare_on_fixtures(tmp_path):
    scs = [fixture_scenario(n) for n in (4, 5, 6)]
    res = harness.compare(scs)
    assert len(res) == 12
    table = harness.summary_table(res)
    assert table.count("\n") == 13
    by = {(r.scenario, r.method): r.objective for r in res}
    for sc in scs:
        assert by[sc.name, "asp"] <= by[sc.name, "enum-ilp"] == pytest.approx(by[sc.name, "cg-ilp"])
