"""Randomised invariants shared by the solvers."""

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from conftest import random_instance
from scmap.baselines import asp_bandwidth
from scmap.cg_quadratic import run_cg_ilp
from scmap.master import InfeasibleModelError
from scmap.solution import validate_solution
from scmap.two_phase import run_two_phase, solve_phase2, sptg

REL = 1e-6
seeds = st.integers(0, 10**6)


def sandwich(sc, K, res):
    asp = asp_bandwidth(sc.net, sc.demands).value
    lp, ilp = res.lp_objective, res.solution.objective
    assert asp <= lp * (1 + REL) + 1e-9, (asp, lp)
    assert lp <= ilp * (1 + REL) + 1e-9, (lp, ilp)
    assert validate_solution(sc, res.solution, K).feasible


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seeds)
def test_sandwich_cg_ilp(seed):
    sc, K = random_instance(seed, max_pairs=3)
    try:
        res = run_cg_ilp(sc, K)
    except InfeasibleModelError:
        return
    sandwich(sc, K, res)


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seeds, st.integers(1, 4))
def test_sandwich_two_phase(seed, n_c):
    sc, K = random_instance(seed, max_nodes=6, max_pairs=5, max_len=2)
    try:
        res = run_two_phase(sc, n_c, K)
    except InfeasibleModelError:
        return
    sandwich(sc, K, res)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seeds, st.integers(1, 4))
def test_two_phase_monotone_in_k_with_pool(seed, n_c):
    sc, _ = random_instance(seed, max_nodes=6, max_pairs=5, loose=True)
    chain = sc.active_chains[0]
    part = {chain.id: sptg(sc.net, chain, sc.demands, n_c)}
    pool, prev = [], None
    for K in range(1, sc.net.num_nodes + 1):
        try:
            res = solve_phase2(sc, part, K, pool=pool)
        except InfeasibleModelError:
            assert prev is None  # infeasibility can only disappear as K grows
            continue
        if prev is not None:
            assert res.solution.objective <= prev * (1 + REL) + 1e-9
        prev, pool = res.solution.objective, res.pool


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seeds)
def test_two_phase_monotone_in_replicas_with_pool(seed):
    sc, K = random_instance(seed, max_nodes=5, max_pairs=4, loose=True)
    chain = sc.active_chains[0]
    part = {chain.id: sptg(sc.net, chain, sc.demands, len(sc.demands))}
    pool, prev = [], None
    for r in range(1, K + 1):
        try:
            res = solve_phase2(sc.with_replicas(r), part, K, pool=pool)
        except InfeasibleModelError:
            assert prev is None
            continue
        if prev is not None:
            assert res.solution.objective <= prev * (1 + REL) + 1e-9
        prev, pool = res.solution.objective, res.pool


@pytest.mark.parametrize("seed", range(300, 310))
def test_exact_solvers_agree_with_loose_resources(seed):
    from scmap.enum_ilp import solve_enum_ilp

    sc, K = random_instance(seed, loose=True)
    ref = solve_enum_ilp(sc, K)
    assert run_cg_ilp(sc, K).solution.objective == pytest.approx(ref.objective, abs=1e-9)
