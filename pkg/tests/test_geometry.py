import numpy as np
import pytest

from himo.environments import chain2, random_mdp, self_loop, two_branches
from himo.geometry import (
    counter_correlations,
    fisher_information,
    path_geometry,
    path_gradient,
    policy_value,
    sa_successor,
    successor_representation,
    transition_matrix,
)
from himo.mdp import MdpModel, expected_rewards, index_from_counts, sa_index
from himo.policy import PolicyTable, init_random_policy, policy_from_preferences, random_policy

# closed forms for the geometric path-length law at lam = 0.5: <n> = 1/(1-lam), <n^2> = (1+lam)/(1-lam)^2
SELF_LOOP_C = 6.0
TWO_LOOP_C = (2.0, 1.0)
TWO_LOOP_FISHER = 2.0
CHAIN_VALUE = 2 / 3
CHAIN_GO_GRADIENT = 4 / 9


def uniform(model):
    return policy_from_preferences(init_random_policy(model))


def two_loops():
    return self_loop(1.0, 2)


def test_transition_matrix_examples():
    assert transition_matrix(self_loop(), uniform(self_loop())).tolist() == [[1.0]]
    pi = PolicyTable([0.25, 0.75, 1.0], sa_index(chain2()))
    assert transition_matrix(chain2(), pi)[0].tolist() == [0.25, 0.75]
    swap = MdpModel(["a", "b"], [["x", "y"], ["x", "y"]], np.array([[0, 1.0], [0, 1], [1, 0], [1, 0]]), np.zeros((4, 2)))
    assert transition_matrix(swap, uniform(swap)).tolist() == [[0, 1], [1, 0]]


def test_successor_examples():
    assert successor_representation(np.array([[1.0]]), 0.5) == pytest.approx(2.0)
    T = np.array([[0.0, 1.0], [0.0, 1.0]])
    D = successor_representation(T, 0.5)
    assert np.allclose(D, [[1, 1], [0, 2]])
    neumann = sum(np.linalg.matrix_power(0.5 * T, t) for t in range(80))
    assert np.allclose(D, neumann)
    lam = 1e-4
    assert np.allclose(successor_representation(T, lam), np.eye(2) + lam * T, atol=1e-7)


def test_sa_successor_examples():
    D = np.array([[2.0]])
    assert sa_successor(self_loop(), D, 0.5).tolist() == [[1.0]]
    m = chain2()
    D = np.array([[1.0, 1.0], [0.0, 2.0]])
    E = sa_successor(m, D, 0.5)
    assert E[1, 1] == 1.0
    assert np.allclose(E[1], 0.5 * D[1])


def test_counter_correlation_closed_forms():
    g = path_geometry(self_loop(), uniform(self_loop()), 0.5)
    assert g.C[0, 0] == pytest.approx(SELF_LOOP_C)
    g = path_geometry(two_loops(), uniform(two_loops()), 0.5)
    assert g.C[0, 0] == pytest.approx(TWO_LOOP_C[0]) and g.C[0, 1] == pytest.approx(TWO_LOOP_C[1])


def test_exclusive_branches():
    g = path_geometry(two_branches(), uniform(two_branches()), 0.5)
    assert g.C[2, 3] == 0.0


def test_fisher_examples():
    g = path_geometry(two_loops(), uniform(two_loops()), 0.5)
    assert g.fisher.shape == (1, 1)
    assert g.fisher[0, 0] == pytest.approx(TWO_LOOP_FISHER, abs=1e-6)
    assert path_geometry(self_loop(), uniform(self_loop()), 0.5).fisher.shape == (0, 0)


def test_chain_value_and_gradient():
    g = path_geometry(chain2(), uniform(chain2()), 0.5)
    assert g.value == pytest.approx(CHAIN_VALUE)
    # default rule makes "go" dependent, so use the "first" rule to make "stay" dependent
    pi = policy_from_preferences(init_random_policy(chain2(), sa_index(chain2(), "first")))
    assert path_geometry(chain2(), pi, 0.5).gradient[0] == pytest.approx(CHAIN_GO_GRADIENT)


def test_values():
    assert path_geometry(self_loop(), uniform(self_loop()), 0.5).value == pytest.approx(2.0)
    assert path_geometry(self_loop(0.0), uniform(self_loop()), 0.5).value == 0.0


def test_zero_rewards_zero_gradient():
    m = chain2(0.0)
    assert not path_geometry(m, uniform(m), 0.5).gradient.any()


def test_structural_invariants_on_random_models():
    rng = np.random.default_rng(11)
    for _ in range(30):
        m = random_mdp(rng, 4, 3)
        idx = sa_index(m)
        pi = random_policy(rng, idx)
        lam = float(rng.uniform(0.1, 0.95))
        g = path_geometry(m, pi, lam)
        assert np.max(np.abs(g.D - (np.eye(m.n_states) + lam * g.T @ g.D))) < 1e-10
        assert np.array_equal(g.C, g.C.T)
        assert np.array_equal(g.fisher, g.fisher.T)
        assert np.all(np.diag(g.C) >= g.d0[idx.state_of] * pi.probs - 1e-12)
        if g.fisher.size:
            assert np.linalg.eigvalsh(g.fisher).min() >= -1e-8 * np.max(np.abs(g.fisher))


def test_fisher_is_block_diagonal_by_state():
    rng = np.random.default_rng(2)
    m = random_mdp(rng, 5, 3)
    idx = sa_index(m)
    g = path_geometry(m, random_policy(rng, idx), 0.9)
    states = idx.state_of[idx.independent]
    off = g.fisher[states[:, None] != states[None, :]]
    assert np.max(np.abs(off), initial=0.0) < 1e-12 * np.max(np.abs(g.fisher))


def test_bad_lambda():
    with pytest.raises(ValueError):
        successor_representation(np.eye(1), 1.0)
