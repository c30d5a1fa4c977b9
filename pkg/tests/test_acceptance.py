"""Acceptance gate: one marked test group per criterion.

A pass/fail line per criterion is printed in the terminal summary (see
``conftest.py``).
"""

import time
import timeit

import numpy as np
import pytest

import equiloc as eq
from equiloc.cli import main as cli_main
from equiloc.experiment import ExperimentConfig, divergence_report, emit_reports, run_experiment
from equiloc.linearized import linearized_form, solve_exhaustive

from conftest import random_integer_instance, random_integer_scenarios
from oracles import brute_force_fsum, brute_force_many, naive_objective

# Reference average demand per node (1000 units in total), rounded to integers.
TABLE3_AVG_DEMAND = [409, 260, 39, 23, 22, 20, 16, 15, 15, 14, 11, 11, 10, 8, 8, 7, 7, 4, 3, 3, 93]

ORACLE_MODELS = [m.value for m in eq.TABLE_MODELS] + ["lex-center", "ordered-median"]


def _spec(model, lam=None, rule="free"):
    return eq.ModelSpec.parse(model, ordered_weights=lam if model == "ordered-median" else None,
                              assignment_rule=rule)


def _result(model, sol):
    value = sol.key if model == "lex-center" else sol.objective
    return value, sol.open_set, sol.assignment.assign


# --- 1 -------------------------------------------------------------------------------

@pytest.mark.acceptance(1, "demand derivation reproduces the Lehigh average demand")
def test_a1_demand_derivation(lehigh):
    mean, std = eq.derive_demand(lehigh.nodes, total_demand=1000, std_factor=0.5)
    got = eq.rounded_demand(mean)
    assert np.all(np.abs(got - np.array(TABLE3_AVG_DEMAND)) <= 1)
    assert np.array_equal(std, 0.5 * mean)


@pytest.mark.acceptance(1, "demand derivation reproduces the Lehigh average demand")
def test_a1_demand_runtime(lehigh):
    nodes = lehigh.nodes
    best = min(timeit.repeat(lambda: eq.derive_demand(nodes, 1000, 0.5), number=100, repeat=5))
    assert best / 100 < 1e-3


# --- 2 -------------------------------------------------------------------------------

@pytest.mark.acceptance(2, "exact solver matches brute force (Lehigh + 200 random)")
def test_a2_lehigh_matches_brute_force(lehigh):
    scen = eq.ScenarioSet.deterministic(lehigh)
    lam = tuple(float(k % 3) for k in range(lehigh.n))
    for model in ORACLE_MODELS:
        sol = eq.solve(_spec(model, lam), lehigh)
        if model == "lex-center":
            ref = brute_force_many([model], scen.demand, scen.distance, 1)[model]
        else:
            ref = brute_force_fsum(model, scen.demand, scen.distance, 1, weights=lam)
        assert _result(model, sol) == ref, model
        worst = ref[0][0] if model == "lex-center" else ref[0]
        assert sol.objective - worst == 0.0


@pytest.mark.acceptance(2, "exact solver matches brute force (Lehigh + 200 random)")
def test_a2_random_instances_match_brute_force():
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    for _ in range(200):
        n = int(rng.integers(2, 9))
        p = int(rng.integers(1, min(3, n) + 1))
        n_scen = int(rng.integers(1, 3))
        inst = random_integer_instance(rng, n, p)
        scen = random_integer_scenarios(rng, n, n_scen)
        lam = tuple(float(x) for x in rng.integers(0, 4, n))
        ref = brute_force_many(ORACLE_MODELS, scen.demand, scen.distance, p, weights=lam)
        for model in ORACLE_MODELS:
            sol = eq.solve(_spec(model, lam), inst, scen)
            got = _result(model, sol)
            assert got == ref[model], (model, n, p, n_scen)
            if model != "lex-center":
                assert sol.objective - ref[model][0] == 0.0
    assert time.perf_counter() - t0 < 60.0


# --- 3 -------------------------------------------------------------------------------

@pytest.mark.acceptance(3, "linearized forms reach the solver optimum")
def test_a3_linearization_equivalence():
    rng = np.random.default_rng(777)
    models = [m for m in eq.TABLE_MODELS]
    for _ in range(50):
        n = int(rng.integers(2, 7))
        p = int(rng.integers(1, min(3, n) + 1))
        n_scen = int(rng.integers(1, 6))
        inst = random_integer_instance(rng, n, p, max_d=20, max_w=5)
        scen = random_integer_scenarios(rng, n, n_scen, max_d=20, max_w=5)
        for obj in models:
            spec = eq.ModelSpec(obj, assignment_rule="free")
            lp_value, _, _ = solve_exhaustive(linearized_form(spec, inst, scen))
            sol = eq.solve(spec, inst, scen)
            assert lp_value == sol.objective, (obj.value, n, p, n_scen)


# --- 4 -------------------------------------------------------------------------------

@pytest.mark.acceptance(4, "metric unit values and gini range")
def test_a4_unit_values():
    assert eq.gini([0, 1]) == 0.5
    assert eq.gini([1, 1, 1, 1, 0]) == 0.2
    assert eq.sad([1, 2, 4]) == 12
    assert eq.mad([1, 2, 3, 6]) == 6
    assert eq.variance([0, 2]) == 1


@pytest.mark.acceptance(4, "metric unit values and gini range")
def test_a4_gini_bounds_and_equality():
    rng = np.random.default_rng(4)
    for _ in range(10_000):
        n = int(rng.integers(1, 30))
        v = rng.exponential(10.0, n) * (rng.random(n) < 0.8)
        if v.sum() == 0:
            v[0] = 1.0
        g = eq.gini(v)
        assert 0.0 <= g <= 1.0
        c = np.full(n, float(rng.uniform(0.01, 1e3)))
        assert eq.gini(c) == 0.0
        assert eq.sad(c) == 0.0 and eq.mad(c) == 0.0
        assert eq.range_spread(c) == 0.0 and eq.variance(c) == 0.0


# --- 5 -------------------------------------------------------------------------------

@pytest.mark.acceptance(5, "SAA collapses at N=1 and tightens as N grows")
def test_a5_saa_single_scenario_equals_deterministic(lehigh):
    rng = np.random.default_rng(5)
    inst = lehigh.with_p(2)
    scen = eq.sample(inst, eq.GeneratorSpec.set1(1, seed=11))
    one = scen[0]
    for obj in eq.TABLE_MODELS:
        spec = eq.ModelSpec(obj)
        open_set = tuple(sorted(rng.choice(inst.n, 2, replace=False)))
        a = eq.Assignment(open_set, tuple(int(rng.choice(open_set)) for _ in range(inst.n)))
        z = [float(one.distance[i, a.assign[i]]) for i in range(inst.n)]
        if spec.weighting == "demand_weighted":
            z = [float(one.demand[i]) * v for i, v in enumerate(z)]
        assert eq.saa_objective(spec, a, scen, inst) == naive_objective(obj.value, z)


@pytest.mark.acceptance(5, "SAA collapses at N=1 and tightens as N grows")
def test_a5_estimator_variance_shrinks(lehigh):
    spec = eq.ModelSpec.parse("p-median")
    a = eq.Assignment((4,), (4,) * lehigh.n)
    est = {50: [], 200: []}
    for rep in range(30):
        for n in est:
            scen = eq.sample(lehigh, eq.GeneratorSpec.set1(n, seed=1000 * n + rep))
            est[n].append(eq.saa_objective(spec, a, scen, lehigh))
    assert np.var(est[200]) < np.var(est[50])


# --- 6 and 8 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def lehigh_runs(tmp_path_factory):
    cfg = ExperimentConfig()
    out = []
    for k, workers in enumerate((4, 1)):
        t0 = time.perf_counter()
        table = run_experiment(cfg, workers=workers)
        elapsed = time.perf_counter() - t0
        d = tmp_path_factory.mktemp(f"run{k}")
        emit_reports(table, d)
        out.append((table, d, elapsed))
    return out


@pytest.mark.acceptance(6, "uncertainty and equity move the Lehigh optimum")
def test_a6_divergence(lehigh_runs):
    table, _, elapsed = lehigh_runs[0]
    assert len(table.models) == 11 and len(table.columns) == 4
    assert all(c.ok for c in table.cells)
    div = divergence_report(table)
    assert div["det_vs_saa_count"] >= 1
    assert max(div["differing_model_pairs"].values()) >= 1
    assert elapsed < 60.0


@pytest.mark.acceptance(8, "deterministic CSVs and zero-discrepancy verify")
def test_a8_byte_identical_csv(lehigh_runs):
    (_, d1, _), (_, d2, _) = lehigh_runs
    names = sorted(p.name for p in d1.glob("*.csv"))
    assert names == sorted(p.name for p in d2.glob("*.csv"))
    assert len(names) == 4
    for name in names:
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes(), name
    assert (d1 / "manifest.json").read_bytes() == (d2 / "manifest.json").read_bytes()


@pytest.mark.acceptance(8, "deterministic CSVs and zero-discrepancy verify")
def test_a8_verify(lehigh_runs, capsys):
    _, d1, _ = lehigh_runs[0]
    assert cli_main(["verify", "--run", str(d1)]) == 0
    out = capsys.readouterr().out
    assert "max discrepancy 0.0" in out
    rep = eq.experiment.verify_run(d1)
    assert rep.ok and rep.rows_checked == 44 and rep.max_discrepancy == 0.0


# --- 7 -------------------------------------------------------------------------------

@pytest.mark.acceptance(7, "Pigou-Dalton transfers never lower the Gini index")
def test_a7_pigou_dalton_gini():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(2, 12))
        v = rng.uniform(0.5, 100.0, n)
        i, j = (int(k) for k in rng.choice(n, 2, replace=False))
        if v[i] > v[j]:
            i, j = j, i
        if v[i] == v[j]:
            v[j] += 1.0
        delta = float(rng.uniform(0.0, v[i]))
        delta = delta if delta > 0 else v[i]
        assert eq.check_pigou_dalton("gini", v, i, j, delta)
