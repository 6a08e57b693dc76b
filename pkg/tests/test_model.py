import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arobundle.inventory import default_config, generate
from arobundle.model import (InstanceError, InstanceValidationError, Polytope, load_instance,
                             matrix_from_json, matrix_to_json, save_instance, validate)
from arobundle.oracle import random_instance


def test_minimal_document(minimal_doc):
    inst = load_instance(json.dumps(minimal_doc))
    assert inst.T == 1
    assert inst.stages[0].At.shape == (1, 1)
    assert validate(inst).ok


def test_wrong_block_shape_names_stage(minimal_doc):
    doc = minimal_doc
    doc["T"] = 2
    doc["stages"].append(json.loads(json.dumps(doc["stages"][0])))
    doc["stages"][1]["At"] = {"rows": 2, "cols": 1, "triplets": []}
    doc["U"] = {"dim": 2, "lo": [0, 0], "hi": [1, 1]}
    with pytest.raises(InstanceValidationError, match="stage 2 equality block At"):
        load_instance(json.dumps(doc))


def test_schema_error_carries_path(minimal_doc):
    del minimal_doc["T"]
    with pytest.raises(InstanceError, match=r"\$"):
        load_instance(json.dumps(minimal_doc))


def test_inventory_instance_validates():
    assert validate(generate(default_config(3), 0)).findings == []


def test_inverted_box_reported():
    inst = random_instance(0)
    U = inst.U
    bad = Polytope(U.D, U.e, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    from dataclasses import replace
    rep = validate(replace(inst, U=bad))
    assert any("infeasible U" in f for f in rep.findings)


def test_polytope_contains_and_box():
    U = Polytope(np.ones((1, 2)), np.array([1.0]), np.zeros(2), np.ones(2))
    assert U.contains([0.5, 0.5]) and not U.contains([0.8, 0.8])
    assert Polytope.box([0, 0], [1, 1]).D.shape == (0, 2)


@pytest.mark.parametrize("seed", range(5))
def test_save_load_round_trip(seed):
    inst = random_instance(seed, T=2, budget=True)
    text = save_instance(inst)
    back = load_instance(text)
    assert save_instance(back) == text
    for a, b in zip(inst.stages, back.stages):
        np.testing.assert_array_equal(a.Wt, b.Wt)
        np.testing.assert_array_equal(a.m0, b.m0)


def test_inventory_round_trip_keeps_observed_mask():
    inst = generate(default_config(2), 3)
    back = load_instance(save_instance(inst))
    np.testing.assert_array_equal(back.U.observed, inst.U.observed)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
def test_matrix_json_round_trip(r, c, seed):
    rng = np.random.default_rng(seed)
    M = rng.uniform(-1, 1, (r, c)) * (rng.random((r, c)) < 0.5)
    np.testing.assert_array_equal(matrix_from_json(matrix_to_json(M), r, c), M)
