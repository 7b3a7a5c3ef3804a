"""Independent ground truth for the analytic path quantities and the optimizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import check_lambda, policy_value, successor_representation, transition_matrix
from .mdp import MdpModel, SaIndexMap, expected_rewards
from .policy import PreferenceVector, independent_mass, policy_from_preferences


class OracleGuardError(ValueError):
    """The requested oracle computation is larger than its guard allows."""


@dataclass(frozen=True)
class PathMoments:
    first: np.ndarray
    second: np.ndarray
    horizon: int
    truncation_bound: float


def enumerate_path_moments(
    model: MdpModel,
    pi,
    lam: float,
    horizon: int,
    max_states: int = 5,
    max_actions: int = 3,
    max_horizon: int = 25,
) -> PathMoments:
    """First and second moments of the state-action counters under the truncated path measure.

    A path of ``n`` transitions has weight ``prod(pi * p) * lam**(n-1) * (1 - lam)``;
    paths longer than ``horizon`` are dropped. For each pair of counters the
    forward pass groups paths by (current state, n_x, n_y), which is lossless
    for the joint law of that pair.
    """
    lam = check_lambda(lam)
    p = pi.probs if hasattr(pi, "probs") else np.asarray(pi, dtype=float)
    counts = model.action_counts
    if model.n_states > max_states or max(counts) > max_actions or horizon > max_horizon:
        size = float(sum(counts)) ** horizon
        raise OracleGuardError(
            f"refusing enumeration over {model.n_states} states, up to {max(counts)} actions and horizon "
            f"{horizon} (about {size:.3g} action sequences; guard is {max_states} states, "
            f"{max_actions} actions, horizon {max_horizon})"
        )
    if horizon < 1:
        raise ValueError("horizon must be at least 1")

    n, total = model.n_states, model.total_sa
    state_of = np.repeat(np.arange(n), counts)
    # kernel[x, k]: probability of taking state-action x and landing in k, given the state of x
    kernel = p[:, None] * model.dynamics

    second = np.zeros((total, total))
    first = np.zeros(total)
    size = horizon + 1
    for x in range(total):
        for y in range(x, total):
            alive = np.zeros((n, size, size))
            alive[model.start_state, 0, 0] = 1.0
            ended = np.zeros((size, size))
            for step in range(horizon):
                nxt = np.zeros_like(alive)
                for z in range(total):
                    src = alive[state_of[z]]
                    if not src.any():
                        continue
                    shifted = np.zeros_like(src)
                    da, db = int(z == x), int(z == y)
                    shifted[da:, db:] = src[: size - da, : size - db]
                    nxt += kernel[z][:, None, None] * shifted[None]
                ended += (1.0 - lam) * nxt.sum(axis=0)
                alive = lam * nxt
            a = np.arange(size)
            second[x, y] = second[y, x] = float(a @ ended @ a)
            if x == y:
                first[x] = float(ended.sum(axis=1) @ a)
    bound = float(second.max(initial=0.0)) * lam**horizon * horizon**2 / (1.0 - lam) ** 2
    return PathMoments(first=first, second=second, horizon=horizon, truncation_bound=bound)


def _value_of(model: MdpModel, nu: PreferenceVector, lam: float, rbar: np.ndarray) -> float:
    pi = policy_from_preferences(nu)
    D = successor_representation(transition_matrix(model, pi), lam)
    return policy_value(D, pi, rbar, nu.index, model.start_state)


def _feasible_shift(nu: PreferenceVector, x: int, eps: float) -> bool:
    up = nu.values.copy()
    up[x] += eps
    shifted = PreferenceVector(up, nu.index)
    return up[x] < 0 and bool(np.all(independent_mass(shifted) < 1.0))


def finite_difference_gradient(model: MdpModel, nu: PreferenceVector, lam: float, eps: float = 1e-5) -> np.ndarray:
    """Central differences of the policy value in every independent preference."""
    rbar = expected_rewards(model)
    grad = np.zeros(nu.values.size)
    for x in range(nu.values.size):
        h = eps
        for _ in range(4):
            if _feasible_shift(nu, x, h):
                break
            h *= 0.1
        else:
            raise ValueError(f"preference {x} is too close to the feasibility boundary for eps={eps}")
        plus, minus = nu.values.copy(), nu.values.copy()
        plus[x] += h
        minus[x] -= h
        grad[x] = (
            _value_of(model, PreferenceVector(plus, nu.index), lam, rbar)
            - _value_of(model, PreferenceVector(minus, nu.index), lam, rbar)
        ) / (2 * h)
    return grad


@dataclass(frozen=True)
class ValueIterationResult:
    values: np.ndarray
    q: np.ndarray
    policy: np.ndarray
    iterations: int

    def optimal_actions(self, index: SaIndexMap, state: int, rtol: float = 1e-9) -> np.ndarray:
        """Actions whose Q-value ties the best one at ``state``."""
        q = self.q[index.offsets[state]:index.offsets[state + 1]]
        return np.flatnonzero(q >= q.max() - rtol * max(1.0, abs(q.max())))


def value_iteration(model: MdpModel, lam: float, tol: float = 1e-12, max_iters: int = 100_000) -> ValueIterationResult:
    """Bellman optimality backups with the foresight as discount; lowest-index tie-break."""
    lam = check_lambda(lam)
    offsets = model.offsets()
    rbar = expected_rewards(model)
    V = np.zeros(model.n_states)
    for it in range(1, max_iters + 1):
        Q = rbar + lam * model.dynamics @ V
        V_new = np.maximum.reduceat(Q, offsets[:-1])
        delta = float(np.max(np.abs(V_new - V)))
        V = V_new
        if delta < tol:
            break
    Q = rbar + lam * model.dynamics @ V
    policy = []
    for i in range(model.n_states):
        q = Q[offsets[i]:offsets[i + 1]]
        best = q.max()
        policy.append(int(np.flatnonzero(q >= best - 1e-9 * max(1.0, abs(best)))[0]))
    return ValueIterationResult(V, Q, np.array(policy, dtype=int), it)


def deterministic_policy_probs(model: MdpModel, actions) -> np.ndarray:
    """Flat one-hot probabilities for a deterministic policy."""
    probs = np.zeros(model.total_sa)
    probs[model.offsets()[:-1] + np.asarray(actions, dtype=int)] = 1.0
    return probs
