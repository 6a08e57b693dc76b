from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arobundle.bundle import IterationRecord
from arobundle.inventory import default_config, generate
from arobundle.lowerbound import (EmptyScenarioSetError, ScenarioSet, UndefinedGapError,
                                  build_scenario_tree, harvest_scenarios, optimality_gap,
                                  sample_uniform_scenarios, scenario_lower_bound)
from arobundle.model import Polytope
from arobundle.oracle import brute_force_two_stage, enumerate_vertices, random_instance
from arobundle.transform import build_two_stage
from reference import deterministic_lp


def rec(u):
    return IterationRecord(k=0, query=np.zeros(1), step="null", value=0.0, u=u)


def test_gap_formula():
    assert optimality_gap(11, 9) == 0.2
    assert optimality_gap(5.0, 5.0) == 0.0
    with pytest.raises(UndefinedGapError):
        optimality_gap(1.0, -1.0)


def test_harvest_dedups():
    u = np.array([0.5, 0.25])
    S = harvest_scenarios([rec(u), rec(u + 1e-9), rec(None)])
    assert len(S) == 1


def test_harvest_cap_keeps_latest():
    pts = [np.array([float(i)]) for i in range(5)]
    S = harvest_scenarios([rec(p) for p in pts], cap=2)
    assert S.scenarios[:, 0].tolist() == [3.0, 4.0]


def test_harvest_empty_log():
    with pytest.raises(EmptyScenarioSetError):
        harvest_scenarios([rec(None)])


@pytest.mark.filterwarnings("ignore:trust box active")
def test_singleton_set_harvests_one_scenario():
    inst = random_instance(0, T=2)
    u = inst.U.lo
    inst = replace(inst, U=Polytope.box(u, u))
    from arobundle.bundle import run
    sol = run(build_two_stage(inst))
    assert len(harvest_scenarios(sol.log, inst.U)) == 1


def test_tree_groups_shared_prefix():
    inst = random_instance(0, T=2)
    S = ScenarioSet(np.array([[0.1, 0.2], [0.1, 0.3]]))
    tree = build_scenario_tree(S, inst)
    assert tree.n_groups == [1, 2]
    assert tree.check_refinement()


def test_tree_identical_scenarios_form_one_chain():
    inst = random_instance(0, T=3)
    S = ScenarioSet(np.tile([0.1, 0.2, 0.3], (4, 1)))
    assert build_scenario_tree(S, inst).n_groups == [1, 1, 1]


def test_tree_ignores_unobserved_coordinates():
    inst = generate(default_config(2), 0)
    S = ScenarioSet(np.array([[10.0, 0.2, 9.0, 0.0], [10.0, 0.7, 9.0, 1.0]]))
    assert build_scenario_tree(S, inst).n_groups == [1, 1]


@pytest.mark.parametrize("seed", range(4))
def test_single_scenario_is_deterministic_lp(seed):
    inst = random_instance(seed, T=2)
    u = np.random.default_rng(seed).uniform(inst.U.lo, inst.U.hi)
    lb = scenario_lower_bound(inst, ScenarioSet(u[None, :]))
    assert lb.value == pytest.approx(deterministic_lp(inst, u), abs=1e-7)


@pytest.mark.parametrize("seed", range(4))
def test_lower_bound_below_rule_optimum(seed):
    inst = random_instance(seed, T=2, budget=True)
    S = ScenarioSet(enumerate_vertices(inst.U).vertices)
    lb = scenario_lower_bound(inst, S).value
    assert lb <= brute_force_two_stage(build_two_stage(inst)).value + 1e-7


def test_uniform_sampler():
    U = Polytope.box([0.0, -1.0], [1.0, 1.0])
    a = sample_uniform_scenarios(U, 50, seed=3)
    b = sample_uniform_scenarios(U, 50, seed=3)
    np.testing.assert_array_equal(a.scenarios, b.scenarios)
    assert all(U.contains(u) for u in a.scenarios)
    budget = Polytope(np.ones((1, 2)), np.array([0.0]), np.zeros(2) - 1, np.ones(2))
    assert all(budget.contains(u) for u in sample_uniform_scenarios(budget, 30, seed=0).scenarios)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**5), st.integers(1, 6))
def test_more_scenarios_never_lower_the_bound(seed, n):
    inst = random_instance(seed % 50, T=2)
    S = sample_uniform_scenarios(inst.U, n + 1, seed=seed)
    small = scenario_lower_bound(inst, S.head(n)).value
    big = scenario_lower_bound(inst, S).value
    assert big >= small - 1e-7 * (1 + abs(small))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**5), st.integers(1, 8))
def test_tree_is_a_refinement(seed, n):
    inst = random_instance(seed % 50, T=3)
    rng = np.random.default_rng(seed)
    # coarse grid so prefixes repeat
    S = ScenarioSet(rng.integers(0, 2, (n, 3)) * 0.5 + inst.U.lo)
    tree = build_scenario_tree(S, inst)
    assert tree.check_refinement()
    assert tree.n_groups == sorted(tree.n_groups)
