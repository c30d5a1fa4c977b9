import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import equiloc as eq
from equiloc.errors import ConfigurationError, InfeasibleError, ValidationError
from equiloc.solver import HEURISTIC, OPTIMAL, TIME_LIMIT, TimeLimitError

from conftest import random_integer_instance, random_integer_scenarios
from oracles import brute_force, naive_objective

# Four nodes, p = 2: letting nodes skip their nearest open site narrows the spread.
EQUITY2_WITNESS = [[0, 16, 17, 13], [1, 0, 5, 16], [18, 9, 0, 15], [7, 17, 8, 0]]

MONOTONE = ("p-median", "p-center", "total-distance")


def solve(name, inst, scen=None, **opts):
    return eq.solve(eq.ModelSpec.parse(name), inst, scen, eq.SolveOptions(**opts))


def test_pcenter_small_example(tri):
    sol = solve("p-center", tri)
    assert sol.open_set == (1,) and sol.objective == 10.0
    assert sol.status == OPTIMAL and not sol.heuristic


def test_full_opening_is_all_zero(tri):
    full = tri.with_p(3)
    for obj in eq.TABLE_MODELS:
        sol = eq.solve(eq.ModelSpec(obj), full)
        assert sol.assignment.assign == (0, 1, 2)
        assert sol.objective == 0.0


def test_lex_minimax_small_example(tri):
    sol = eq.lexicographic_minimax(tri)
    assert sol.open_set == (1,)
    assert sol.key == (10.0, 5.0, 0.0)
    assert sol.objective == solve("p-center", tri).objective


def test_lex_prefers_better_second_worst():
    # open {0}: outcomes (0, 20, 10); open {1}: (20, 0, 5)
    d = [[0, 20, 20], [20, 0, 20], [10, 5, 0]]
    sol = eq.lexicographic_minimax(eq.from_arrays(d))
    assert sorted(sol.per_node_outcomes.values, reverse=True) == [20.0, 5.0, 0.0]
    assert sol.open_set == (1,)


def test_constant_matrix_ties_to_lowest_set():
    d = np.full((4, 4), 7.0)
    np.fill_diagonal(d, 0.0)
    inst = eq.from_arrays(d, p=2)
    assert eq.lexicographic_minimax(inst).open_set == (0, 1)
    for obj in eq.TABLE_MODELS:
        assert eq.solve(eq.ModelSpec(obj), inst).open_set == (0, 1)


def test_p1_rules_identical(lehigh):
    for obj in eq.TABLE_MODELS:
        spec = eq.ModelSpec(obj)
        free = eq.inner_assignment(spec, (3,), None, lehigh, rule="free")
        close = eq.inner_assignment(spec, (3,), None, lehigh, rule="closest")
        assert free == close == eq.Assignment((3,), (3,) * lehigh.n)


def test_equity2_witness_free_beats_closest():
    inst = eq.from_arrays(EQUITY2_WITNESS, p=2)
    free = solve("equity-2", inst, assignment_rule="free")
    close = solve("equity-2", inst, assignment_rule="closest")
    assert (free.objective, free.open_set, free.assignment.assign) == (2.0, (1, 3), (1, 3, 3, 1))
    assert (close.objective, close.open_set) == (7.0, (0, 2))
    scen = eq.ScenarioSet.deterministic(inst)
    assert brute_force("equity-2", scen.demand, scen.distance, 2)[0] == 2.0


@pytest.mark.parametrize("name", MONOTONE)
def test_monotone_free_equals_closest(name):
    rng = np.random.default_rng(11)
    for _ in range(40):
        n = int(rng.integers(2, 7))
        inst = random_integer_instance(rng, n, int(rng.integers(1, min(3, n) + 1)))
        free = solve(name, inst, assignment_rule="free")
        close = solve(name, inst, assignment_rule="closest")
        assert free.objective == close.objective


def test_inner_assignment_closest_vs_exhaustive():
    rng = np.random.default_rng(12)
    for _ in range(20):
        inst = random_integer_instance(rng, 6, 2)
        spec = eq.ModelSpec.parse("p-median")
        open_set = (1, 4)
        a = eq.inner_assignment(spec, open_set, None, inst, rule="closest")
        got = eq.saa_objective(spec, a, eq.ScenarioSet.deterministic(inst), inst)
        best = min(
            naive_objective("p-median", [inst.demand_mean[i] * inst.distance[i, j]
                                         for i, j in enumerate(assign)])
            for assign in itertools.product(open_set, repeat=6))
        assert got == best


def test_inner_assignment_validation(tri):
    with pytest.raises(ValidationError):
        eq.inner_assignment(eq.ModelSpec.parse("p-center"), (0, 1), None, tri)


def test_self_consistency_lehigh_saa(lehigh):
    inst = lehigh.with_p(2)
    scen = eq.sample(inst, eq.GeneratorSpec.set2(10, seed=3))
    for obj in eq.TABLE_MODELS:
        spec = eq.ModelSpec(obj)
        sol = eq.solve(spec, inst, scen)
        assert eq.saa_objective(spec, sol.assignment, scen, inst) - sol.objective == 0.0


def test_worker_count_independence(lehigh):
    inst = lehigh.with_p(2)
    scen = eq.sample(inst, eq.GeneratorSpec.set1(5, seed=2))
    for name in ("p-median", "equity-2", "equity-7", "lex-center"):
        one = solve(name, inst, scen, workers=1)
        many = solve(name, inst, scen, workers=6)
        assert (one.key, one.open_set, one.assignment) == (many.key, many.open_set,
                                                           many.assignment)


def test_workers_env(monkeypatch, lehigh):
    monkeypatch.setenv("EQUILOC_THREADS", "3")
    assert eq.solver.default_workers() == 3
    monkeypatch.setenv("EQUILOC_THREADS", "many")
    with pytest.raises(ConfigurationError):
        eq.solver.default_workers()


def test_beta_constraint_respected_and_matches_oracle():
    rng = np.random.default_rng(13)
    for _ in range(15):
        inst = random_integer_instance(rng, 5, 2)
        scen = random_integer_scenarios(rng, 5, 2)
        spec = eq.ModelSpec.parse("equity-1", beta=0.3)
        ref = brute_force("equity-1", scen.demand, scen.distance, 2, beta=0.3)
        if ref is None:
            with pytest.raises(InfeasibleError):
                eq.solve(spec, inst, scen)
            continue
        sol = eq.solve(spec, inst, scen)
        assert (sol.objective, sol.open_set, sol.assignment.assign) == ref
        assert eq.ratio_min_max(sol.per_node_outcomes) >= 0.3


def test_beta_infeasible_report(tri):
    spec = eq.ModelSpec.parse("equity-2", beta=1.0)
    with pytest.raises(InfeasibleError) as info:
        eq.solve(spec, tri)
    assert info.value.report["beta"] == 1.0


def test_subset_guard():
    d = np.ones((40, 40))
    np.fill_diagonal(d, 0.0)
    with pytest.raises(ConfigurationError):
        eq.solve(eq.ModelSpec.parse("p-median"), eq.from_arrays(d, p=8))


def test_local_search_not_worse_than_greedy_and_flagged(lehigh):
    inst = lehigh.with_p(3)
    for name in ("p-median", "p-center", "equity-3"):
        heur = solve(name, inst, method="local_search", seed=1)
        assert heur.status == HEURISTIC and heur.heuristic
        exact = solve(name, inst)
        assert heur.objective >= exact.objective
        assert heur.objective <= _greedy_value(name, inst)


def _greedy_value(name, inst):
    # independent greedy: add the site that most improves the closest-rule objective
    spec = eq.ModelSpec.parse(name, assignment_rule="closest")
    chosen = []
    for k in range(inst.p):
        best = None
        for j in range(inst.n):
            if j in chosen:
                continue
            s = tuple(sorted(chosen + [j]))
            a = eq.Assignment.closest(s, inst.distance)
            v = eq.objective_value(spec, eq.outcomes(inst.with_p(len(s)), a,
                                                     weighting=spec.weighting))
            if best is None or (v, s) < best:
                best = (v, s)
        chosen = list(best[1])
    a = eq.Assignment.closest(chosen, inst.distance)
    return eq.objective_value(spec, eq.outcomes(inst, a, weighting=spec.weighting))


def _fake_clock(monkeypatch, step):
    ticks = itertools.count()
    monkeypatch.setattr(eq.solver.time, "monotonic", lambda: step * next(ticks))


def test_time_limit_marks_incumbent(monkeypatch, lehigh):
    _fake_clock(monkeypatch, 1.0)
    sol = solve("equity-1", lehigh.with_p(3), time_limit=2.5, workers=1)
    assert sol.status == TIME_LIMIT
    # the incumbent is a genuine feasible solution with a consistent value
    scen = eq.ScenarioSet.deterministic(lehigh)
    spec = eq.ModelSpec.parse("equity-1")
    assert eq.saa_objective(spec, sol.assignment, scen, lehigh.with_p(3)) == sol.objective


def test_time_limit_without_incumbent(monkeypatch, lehigh):
    _fake_clock(monkeypatch, 1e3)
    with pytest.raises(TimeLimitError):
        solve("equity-1", lehigh.with_p(3), time_limit=1.0, workers=1)


def test_time_limit_local_search(monkeypatch, lehigh):
    _fake_clock(monkeypatch, 1.0)
    sol = solve("equity-5", lehigh.with_p(3), method="local_search", time_limit=4.5)
    assert sol.status == TIME_LIMIT


def test_solution_dict(lehigh):
    sol = eq.lexicographic_minimax(lehigh)
    d = sol.to_dict(lehigh)
    assert d["model"] == "lex-center" and d["locations"] == sol.labels(lehigh)
    assert d["lex_key"][0] == d["objective"]


@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["equity-4", "equity-6", "equity-8"]))
def test_free_never_worse_than_closest(seed, name):
    rng = np.random.default_rng(seed)
    inst = random_integer_instance(rng, 5, 2)
    scen = random_integer_scenarios(rng, 5, 2)
    free = solve(name, inst, scen, assignment_rule="free")
    close = solve(name, inst, scen, assignment_rule="closest")
    assert free.objective <= close.objective
