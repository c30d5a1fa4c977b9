import zlib

import numpy as np
import pytest

import equiloc as eq
from equiloc.errors import UnsupportedModelError
from equiloc.linearized import linearized_form, solve_exhaustive

from conftest import random_integer_instance, random_integer_scenarios


def test_pcenter_structure(tri):
    m = linearized_form(eq.ModelSpec.parse("p-center"), tri)
    assert m.count("t") == 1
    assert m.count("y_") == 9 and m.count("x_") == 3
    assert len(m.rows_tagged("C1")) == 1
    assert len(m.rows_tagged("C2")) == 3
    assert len(m.rows_tagged("C3")) == 9


def test_pcenter_saa_shares_assignment(lehigh):
    scen = eq.sample(lehigh, eq.GeneratorSpec.set1(50, seed=3))
    m = linearized_form(eq.ModelSpec.parse("p-center"), lehigh, scen)
    assert m.count("t") == 50
    assert m.count("y_") == lehigh.n ** 2
    assert m.divisor == 50.0


def test_equity1_pair_variables(tri):
    m = linearized_form(eq.ModelSpec.parse("equity-1"), tri)
    assert m.count("u0_") == 6
    assert len(m.rows_tagged("abs0")) == 12


@pytest.mark.parametrize("spec", [
    eq.ModelSpec.parse("lex-center"),
    eq.ModelSpec.parse("ordered-median", ordered_weights=(1, 0, 0)),
    eq.ModelSpec.parse("equity-2", beta=0.5),
])
def test_unsupported_forms(tri, spec):
    with pytest.raises(UnsupportedModelError):
        linearized_form(spec, tri)


def test_exhaustive_small_example(tri):
    value, open_set, assign = solve_exhaustive(linearized_form(eq.ModelSpec.parse("p-center"),
                                                               tri))
    assert (value, open_set, assign) == (10.0, (1,), (1, 1, 1))


@pytest.mark.parametrize("obj", eq.TABLE_MODELS, ids=lambda o: o.value)
def test_linear_optimum_matches_solver_p2(obj):
    rng = np.random.default_rng(zlib.crc32(obj.value.encode()))
    for _ in range(4):
        inst = random_integer_instance(rng, 5, 2, max_d=15, max_w=4)
        scen = random_integer_scenarios(rng, 5, 3, max_d=15, max_w=4)
        spec = eq.ModelSpec(obj, assignment_rule="free")
        value, open_set, assign = solve_exhaustive(linearized_form(spec, inst, scen))
        sol = eq.solve(spec, inst, scen)
        assert value == sol.objective
        # the linear optimum's own assignment evaluates to the same value
        assert eq.saa_objective(spec, eq.Assignment(open_set, assign), scen, inst) == value
