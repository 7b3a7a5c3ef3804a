"""Verification routines shared by the ``check`` command and the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import greedy_trajectory
from .environments import Environment, random_mdp
from .geometry import (
    counter_correlations,
    occupancy,
    path_geometry,
    sa_successor,
    successor_representation,
    transition_matrix,
    value_from_occupancy,
)
from .mdp import expected_rewards, sa_index
from .optimizer import HimoConfig, RunTrace, run_himo
from .oracles import (
    deterministic_policy_probs,
    enumerate_path_moments,
    finite_difference_gradient,
    value_iteration,
)
from .policy import PolicyTable, greedy_policy, preferences_from_policy, random_policy

GRADCHECK_TOL = 1e-6
GRAD_FLOOR = 1e-3
MOMENTS_TOL = 1e-4
VALUE_TOL = 1e-6
GRADCHECK_LAMBDAS = (0.3, 0.5, 0.9)


@dataclass(frozen=True)
class GradcheckReport:
    max_rel_err: float
    worst_trial: int
    trials: int

    @property
    def ok(self) -> bool:
        return self.max_rel_err < GRADCHECK_TOL


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error ``|a - b|_inf / max(|a|_inf, |b|_inf, GRAD_FLOOR)``.

    Below the floor the comparison becomes absolute, so models whose gradient
    vanishes exactly (an unreachable state, say) do not turn the
    finite-difference round-off of about 1e-10 into a large relative error.
    """
    if analytic.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(numeric))), float(np.max(np.abs(analytic))), GRAD_FLOOR)
    return float(np.max(np.abs(analytic - numeric))) / scale


def gradcheck(trials: int = 100, seed: int = 0, lam: float | None = None, eps: float = 1e-5) -> GradcheckReport:
    """Analytic path gradient against central differences on random small models."""
    rng = np.random.default_rng(seed)
    worst, worst_trial = 0.0, -1
    for trial in range(trials):
        model = random_mdp(rng, int(rng.integers(1, 6)), 3)
        index = sa_index(model)
        if index.independent_count == 0:
            continue
        pi = random_policy(rng, index)
        nu = preferences_from_policy(pi)
        trial_lam = lam if lam is not None else GRADCHECK_LAMBDAS[trial % len(GRADCHECK_LAMBDAS)]
        analytic = path_geometry(model, pi, trial_lam).gradient
        err = relative_error(analytic, finite_difference_gradient(model, nu, trial_lam, eps))
        if err > worst:
            worst, worst_trial = err, trial
    return GradcheckReport(worst, worst_trial, trials)


@dataclass(frozen=True)
class MomentsReport:
    max_deviation: float
    truncation_bound: float
    horizon: int

    @property
    def ok(self) -> bool:
        return self.max_deviation <= MOMENTS_TOL


def counter_correlations_for(model, pi, lam: float) -> np.ndarray:
    p = pi.probs if isinstance(pi, PolicyTable) else np.asarray(pi, dtype=float)
    index = sa_index(model)
    D = successor_representation(transition_matrix(model, p), lam)
    return counter_correlations(D, sa_successor(model, D, lam), p, index, model.start_state)


def moments_check(env: Environment, horizon: int = 25, lam: float = 0.5, pi=None) -> MomentsReport:
    """Analytic counter correlations against truncated path enumeration; uniform policy by default."""
    model = env.model
    if pi is None:
        counts = np.asarray(model.action_counts)
        pi = np.repeat(1.0 / counts, counts)
    moments = enumerate_path_moments(model, pi, lam, horizon)
    C = counter_correlations_for(model, pi, lam)
    return MomentsReport(float(np.max(np.abs(C - moments.second))), moments.truncation_bound, horizon)


@dataclass(frozen=True)
class CompareReport:
    agree: int
    path_states: int
    himo_value: float
    vi_value: float
    reason: str
    trajectory: tuple[int, ...]
    disagreements: tuple[int, ...]

    @property
    def agreement(self) -> float:
        return self.agree / self.path_states if self.path_states else 1.0

    @property
    def value_gap(self) -> float:
        return abs(self.himo_value - self.vi_value)

    @property
    def ok(self) -> bool:
        return self.agree == self.path_states and self.value_gap <= VALUE_TOL


def vi_policy_value(model, lam: float) -> tuple[float, object]:
    """Occupancy-evaluated value of the value-iteration greedy policy."""
    vi = value_iteration(model, lam)
    probs = deterministic_policy_probs(model, vi.policy)
    index = sa_index(model)
    d0 = occupancy(transition_matrix(model, probs), lam, model.start_state)
    return value_from_occupancy(d0, probs, expected_rewards(model), index), vi


def compare_vi(env: Environment, config: HimoConfig | None = None, trace: RunTrace | None = None) -> CompareReport:
    """Greedy HIMO actions against value-iteration optimal actions along the HIMO greedy path.

    An action counts as agreeing when its Q-value ties the optimum, so
    grids with many equally short routes are not penalized for the route chosen.
    """
    config = config or HimoConfig()
    model = env.model
    trace = trace if trace is not None else run_himo(model, config)
    greedy = greedy_policy(trace.final_policy())
    vi_value, vi = vi_policy_value(model, config.lam)
    index = sa_index(model)
    path = greedy_trajectory(model, greedy)
    bad = tuple(s for s in path if greedy[s] not in vi.optimal_actions(index, s))
    return CompareReport(len(path) - len(bad), len(path), trace.values[-1], vi_value, trace.reason, tuple(path), bad)
