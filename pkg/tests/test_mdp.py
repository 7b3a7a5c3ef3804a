import json

import numpy as np
import pytest

from himo.environments import chain2, self_loop
from himo.mdp import (
    MdpModel,
    ModelParseError,
    ModelValidationError,
    dump_model,
    expected_rewards,
    load_model,
    sa_index,
    validate_model,
)


def one_state(p):
    return MdpModel(["s0"], [["a"]], np.array([[p]]), np.zeros((1, 1)))


def test_self_loop_is_valid():
    assert validate_model(one_state(1.0)) == []


def test_short_row_is_reported():
    assert validate_model(one_state(0.9)) == ["row (0,0) sums to 0.9"]


def test_negative_entry_is_reported():
    m = MdpModel(["s0", "s1"], [["a"], ["b"]], np.array([[-0.1, 1.1], [0.0, 1.0]]), np.zeros((2, 2)))
    problems = validate_model(m)
    assert any("(0,0,0)" in p and "-0.1" in p for p in problems)


MINIMAL = '{"states": [{"name": "s0", "actions": [{"name": "a", "transitions": [{"to": "s0", "p": 1, "r": 1}]}]}], "start": "s0"}'


def test_minimal_file():
    m = load_model(MINIMAL)
    assert m.n_states == 1 and m.total_sa == 1
    assert m.dynamics[0, 0] == 1.0 and m.rewards[0, 0] == 1.0


def test_unknown_state_names_the_state():
    with pytest.raises(ModelParseError, match="nowhere"):
        load_model(MINIMAL.replace('"to": "s0"', '"to": "nowhere"'))


def test_unknown_start():
    with pytest.raises(ModelParseError, match="start"):
        load_model(MINIMAL.replace('"start": "s0"', '"start": "x"'))


def test_bad_json_reports_line():
    with pytest.raises(ModelParseError) as info:
        load_model('{\n "states": [,\n}')
    assert info.value.line == 2


def test_file_row_sum_outside_tolerance():
    doc = json.loads(MINIMAL)
    doc["states"][0]["actions"][0]["transitions"][0]["p"] = 0.99
    with pytest.raises(ModelValidationError, match="sums to"):
        load_model(json.dumps(doc))


def test_file_row_sum_within_tolerance_is_renormalized():
    doc = json.loads(MINIMAL)
    doc["states"][0]["actions"][0]["transitions"][0]["p"] = 1 - 5e-10
    assert load_model(json.dumps(doc)).dynamics[0, 0] == 1.0


def test_chain_round_trip_bit_exact():
    m = chain2()
    again = load_model(dump_model(m))
    assert again == m
    assert np.array_equal(again.dynamics, m.dynamics)


def test_stochastic_round_trip_bit_exact():
    rng = np.random.default_rng(3)
    w = rng.random((3, 3))
    P = w / w.sum(axis=1, keepdims=True)
    m = MdpModel(["a", "b", "c"], [["x"], ["y"], ["z"]], P, rng.normal(size=(3, 3)), 1)
    again = load_model(dump_model(m))
    assert np.array_equal(again.dynamics, m.dynamics) and np.array_equal(again.rewards, m.rewards)


def test_sa_index_counts():
    m = MdpModel(["a", "b"], [["x", "y"], ["x", "y", "z"]], np.full((5, 2), 0.5), np.zeros((5, 2)))
    idx = sa_index(m)
    assert idx.total == 5 and idx.independent_count == 3
    assert idx.omega[1] == 2
    assert sa_index(m, "first").omega.tolist() == [0, 0]
    for x in range(idx.total):
        assert idx.flatten(*idx.unflatten(x)) == x


def test_single_action_has_no_independent_preferences():
    assert sa_index(self_loop()).independent_count == 0


def test_bad_omega_rule():
    with pytest.raises(ValueError):
        sa_index(self_loop(), "middle")


def test_expected_rewards():
    assert expected_rewards(self_loop(1.0)).tolist() == [1.0]
    m = MdpModel(["a", "b"], [["x"], ["y"]], np.array([[0.5, 0.5], [0, 1.0]]), np.array([[0.0, 2.0], [0, 0]]))
    assert expected_rewards(m)[0] == pytest.approx(1.0)
    assert not expected_rewards(self_loop(0.0)).any()


def test_expected_rewards_linear():
    m = MdpModel(["a", "b"], [["x"], ["y"]], np.array([[0.3, 0.7], [0, 1.0]]), np.array([[1.0, 2.0], [3, 4]]))
    scaled = MdpModel(m.state_labels, m.action_labels, m.dynamics, 2.5 * m.rewards)
    assert np.allclose(expected_rewards(scaled), 2.5 * expected_rewards(m))
