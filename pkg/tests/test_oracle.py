from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arobundle.inventory import default_config, generate
from arobundle.model import Polytope
from arobundle.oracle import (brute_force_Q, brute_force_two_stage, check_theorem3,
                              enumerate_vertices, finite_diff_check, random_instance,
                              vertex_rank)
from arobundle.transform import build_two_stage
from reference import deterministic_lp


def test_box_vertices():
    V = enumerate_vertices(Polytope.box([0, 0], [1, 1]))
    assert len(V) == 4


def test_budget_triangle_vertices():
    U = Polytope(np.ones((1, 2)), np.array([1.0]), np.zeros(2), np.ones(2))
    V = enumerate_vertices(U).vertices
    assert sorted(map(tuple, np.round(V, 12))) == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)]
    assert all(vertex_rank(U, v) == 2 for v in V)


def test_vertex_cap_marks_partial_list():
    V = enumerate_vertices(Polytope.box(np.zeros(4), np.ones(4)), cap=5)
    assert not V.exhaustive


def test_singleton_oracle_is_inner_lp():
    inst = random_instance(2, T=2)
    u = inst.U.hi
    inst = replace(inst, U=Polytope.box(u, u))
    ts = build_two_stage(inst)
    x = np.random.default_rng(0).uniform(-1, 1, ts.dim)
    total, _ = ts.recourse(x, u)
    assert brute_force_Q(ts, x).value == pytest.approx(total - ts.first_stage_value(x))


@pytest.mark.parametrize("seed", range(4))
def test_deterministic_rule_optimum_is_lp(seed):
    inst = random_instance(seed, T=2)
    u = inst.U.lo
    inst = replace(inst, U=Polytope.box(u, u))
    assert brute_force_two_stage(build_two_stage(inst)).value == pytest.approx(
        deterministic_lp(inst, u), abs=1e-7)


def test_finite_differences_smooth_function():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    rep = finite_diff_check(lambda x: 0.5 * x @ A @ x, np.array([0.3, -0.2]),
                            A @ np.array([0.3, -0.2]), n_dirs=20, rng=0)
    assert rep.differentiable == 20 and rep.match_rate == 1.0 and rep.subgradient_rate == 1.0


def test_finite_differences_kink_uses_subgradient_inequality():
    rep = finite_diff_check(lambda x: abs(x[0]), np.zeros(1), np.array([0.3]), n_dirs=10, rng=1)
    assert rep.differentiable == 0
    assert rep.subgradient_rate == 1.0


def test_finite_differences_zero_direction():
    rep = finite_diff_check(lambda x: 1.0, np.zeros(0), np.zeros(0), n_dirs=3, rng=0)
    assert all(r["gd"] == 0.0 and r["central"] == 0.0 for r in rep.rows)


@pytest.mark.parametrize("seed", range(3))
def test_bound_chain_on_inventory(seed):
    rep = check_theorem3(generate(default_config(2), seed))
    assert rep.ok, rep.violations
    assert rep.v_S <= rep.v_TPB + 1e-6 <= rep.v_ADR + 2e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**5), st.integers(1, 3), st.booleans())
def test_random_instances_have_complete_recourse(seed, T, budget):
    inst = random_instance(seed, T=T, budget=budget)
    ts = build_two_stage(inst)
    rng = np.random.default_rng(seed)
    x = 5 * rng.uniform(-1, 1, ts.dim)
    u = rng.uniform(inst.U.lo, inst.U.hi)
    assert np.isfinite(ts.recourse(x, u)[0])
