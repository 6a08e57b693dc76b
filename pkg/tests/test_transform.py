from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arobundle.model import Polytope
from arobundle.oracle import random_instance
from arobundle.transform import (AffineStatePolicy, build_two_stage, evaluate_state_policy,
                                 history_columns, solve_adr)
from conftest import tiny_instance
from reference import deterministic_lp


def test_dimension_single_stage():
    inst = random_instance(0, T=1, n_x=2, n_s=2)
    ts = build_two_stage(inst)
    assert ts.dim == 2 + 2 * (1 + 1)


def test_zero_state_costs_give_plain_first_stage_cost():
    inst = tiny_instance(T=2, d=0.0, c=1.5)
    ts = build_two_stage(inst)
    xhat = np.arange(ts.dim, dtype=float) + 1.0
    assert ts.first_stage_value(xhat) == pytest.approx(1.5 * xhat[0])


def test_first_stage_value_arithmetic():
    inst = tiny_instance(T=1, d=3.0, c=1.0)
    ts = build_two_stage(inst)
    xhat = ts.imap.join([2.0], [np.zeros((1, 1))], [[4.0]])
    assert ts.first_stage_value(xhat) == pytest.approx(14.0)
    assert ts.first_stage_value(np.zeros(ts.dim)) == 0.0


def test_state_policy_arithmetic():
    pol = AffineStatePolicy(P=[np.zeros((1, 1)), np.array([[1.0, 2.0]])],
                            q=[np.zeros(1), np.array([3.0])], hist=[np.array([0]), np.array([0, 1])])
    assert evaluate_state_policy(pol, [4.0, 5.0])[1] == pytest.approx([17.0])
    zero = AffineStatePolicy(P=[np.zeros((1, 2))], q=[np.array([7.0])], hist=[np.array([0, 1])])
    assert evaluate_state_policy(zero, [9.0, -3.0])[0] == pytest.approx([7.0])
    assert evaluate_state_policy(pol, [0.0, 0.0])[1] == pytest.approx([3.0])


def test_history_is_causal_and_skips_unobserved():
    inst = random_instance(1, T=3)
    U = inst.U
    inst = replace(inst, U=Polytope(U.D, U.e, U.lo, U.hi, [True, False, True]))
    h = history_columns(inst)
    assert [list(x) for x in h] == [[0], [0], [0, 2]]


@pytest.mark.parametrize("seed", range(4))
def test_adr_without_uncertainty_is_deterministic_lp(seed):
    inst = random_instance(seed, T=2)
    stages = tuple(replace(st, Ht=0 * st.Ht, Mt=0 * st.Mt) for st in inst.stages)
    inst = replace(inst, stages=stages)
    adr = solve_adr(inst, box=1e3)
    assert adr.value == pytest.approx(deterministic_lp(inst, inst.U.lo), abs=1e-7)


@pytest.mark.parametrize("seed", range(4))
def test_adr_on_singleton_is_deterministic_lp(seed):
    inst = random_instance(seed, T=2)
    u = 0.5 * (inst.U.lo + inst.U.hi)
    inst = replace(inst, U=Polytope.box(u, u))
    assert solve_adr(inst, box=1e3).value == pytest.approx(deterministic_lp(inst, u), abs=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**5), st.integers(1, 3), st.booleans())
def test_affine_forms_agree(seed, T, budget):
    inst = random_instance(seed, T=T, budget=budget)
    ts = build_two_stage(inst)
    rng = np.random.default_rng(seed)
    xhat = rng.uniform(-1, 1, ts.dim)
    u = rng.uniform(inst.U.lo, inst.U.hi)
    in_u, cost_u = ts.rhs_in_u(xhat)
    in_x, grad = ts.rhs_in_xhat(u)
    for a, b in zip(in_u, in_x):
        np.testing.assert_allclose(a.r0 + a.R @ u, b.r0 + b.R @ xhat, atol=1e-10)
        np.testing.assert_allclose(a.rho0 + a.Rho @ u, b.rho0 + b.Rho @ xhat, atol=1e-10)
    _, base = ts.stage_rhs(xhat, u)
    assert base == pytest.approx(grad @ xhat)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**5), st.integers(1, 3))
def test_stagewise_recourse_equals_joint_lp(seed, T):
    inst = random_instance(seed, T=T)
    ts = build_two_stage(inst)
    rng = np.random.default_rng(seed)
    xhat = rng.uniform(-1, 1, ts.dim)
    u = rng.uniform(inst.U.lo, inst.U.hi)
    total, _ = ts.recourse(xhat, u)
    assert total == pytest.approx(ts.joint_recourse_value(xhat, u), abs=1e-7 * (1 + abs(total)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**5))
def test_fixed_u_subgradient_is_exact_gradient(seed):
    # at fixed u the recourse value is convex piecewise linear in xhat; its dual gradient
    # is a subgradient: value(x') >= value(x) + <g, x' - x>
    inst = random_instance(seed, T=2)
    ts = build_two_stage(inst)
    rng = np.random.default_rng(seed)
    x, x2 = rng.uniform(-1, 1, (2, ts.dim))
    u = rng.uniform(inst.U.lo, inst.U.hi)
    v, stages = ts.recourse(x, u)
    g = ts.subgradient(u, [(s.phi, s.pi) for s in stages])
    v2, _ = ts.recourse(x2, u)
    assert v2 >= v + g @ (x2 - x) - 1e-7 * (1 + abs(v))
