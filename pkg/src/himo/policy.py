"""Log-probability action preferences and the policies they induce.

Each state keeps one dependent action whose preference is fixed by
normalization; all other preferences are free parameters in ``(-inf, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import MdpModel, SaIndexMap, index_from_counts, sa_index

# numerical margins keeping every implied probability strictly inside (0, 1)
PREF_MARGIN = 1e-12
SUM_MARGIN = 1e-12


class FeasibilityError(ValueError):
    """Preferences whose exponentials leave no probability for the dependent action."""

    def __init__(self, total: float, state: int | None = None):
        self.total = total
        self.state = state
        where = f" at state {state}" if state is not None else ""
        super().__init__(f"independent probabilities sum to {total!r}{where} (must be < 1)")


@dataclass(frozen=True, eq=False)
class PreferenceVector:
    values: np.ndarray
    index: SaIndexMap

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.index.independent_count,):
            raise ValueError(f"expected {self.index.independent_count} preferences, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def full(self) -> np.ndarray:
        """Preferences for every state-action, dependent entries included."""
        return np.log(policy_from_preferences(self).probs)

    def is_feasible(self, pref_margin: float = PREF_MARGIN, sum_margin: float = SUM_MARGIN) -> bool:
        if self.values.size == 0:
            return True
        if not np.all(self.values <= -pref_margin):
            return False
        return bool(np.all(independent_mass(self) <= 1.0 - sum_margin))


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Action probabilities for every flat state-action."""

    probs: np.ndarray
    index: SaIndexMap

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def row(self, i: int) -> np.ndarray:
        return self.probs[self.index.offsets[i]:self.index.offsets[i + 1]]

    def rows(self) -> list[np.ndarray]:
        return [self.row(i) for i in range(self.index.n_states)]


def independent_mass(nu: PreferenceVector) -> np.ndarray:
    """Per-state sum of exp(preference) over the independent actions."""
    idx = nu.index
    mass = np.zeros(idx.n_states)
    np.add.at(mass, idx.state_of[idx.independent], np.exp(nu.values))
    return mass


def init_random_policy(model: MdpModel, index: SaIndexMap | None = None) -> PreferenceVector:
    """Preferences of the uniform policy, -log|A_i| for every independent action."""
    index = index if index is not None else sa_index(model)
    return PreferenceVector(-np.log(index.counts[index.state_of[index.independent]]), index)


def _one_minus_sum_exp(prefs: np.ndarray) -> float:
    # 1 - sum(exp(prefs)) without cancellation when one preference is close to 0
    if prefs.size == 0:
        return 1.0
    m = int(np.argmax(prefs))
    rest = np.delete(prefs, m)
    return float(-np.expm1(prefs[m]) - np.exp(rest).sum())


def dependent_preference(prefs) -> float:
    """log(1 - sum_j exp(prefs_j)) for the independent preferences of one state."""
    prefs = np.asarray(prefs, dtype=float)
    remainder = _one_minus_sum_exp(prefs)
    if not remainder > 0.0:
        raise FeasibilityError(float(np.exp(prefs).sum()))
    return float(np.log(remainder))


def policy_from_preferences(nu: PreferenceVector) -> PolicyTable:
    idx = nu.index
    probs = np.empty(idx.total)
    probs[idx.independent] = np.exp(nu.values)
    pos = np.searchsorted(idx.independent, idx.offsets)
    for i in range(idx.n_states):
        remainder = _one_minus_sum_exp(nu.values[pos[i]:pos[i + 1]])
        if not remainder > 0.0:
            raise FeasibilityError(1.0 - remainder, state=i)
        probs[idx.omega_flat[i]] = remainder
    return PolicyTable(probs, idx)


def preferences_from_policy(pi: PolicyTable) -> PreferenceVector:
    return PreferenceVector(np.log(pi.probs[pi.index.independent]), pi.index)


def greedy_policy(pi: PolicyTable) -> np.ndarray:
    """Most probable action per state; ties go to the lowest action index."""
    return np.array([int(np.argmax(r)) for r in pi.rows()], dtype=int)


def most_probable_omega(pi: PolicyTable, omega_rule: str = "last") -> np.ndarray:
    """Per-state index of the most probable action; ties resolved by ``omega_rule``."""
    omega = []
    for r in pi.rows():
        ties = np.flatnonzero(r == r.max())
        omega.append(int(ties[-1] if omega_rule == "last" else ties[0]))
    return np.array(omega, dtype=int)


def rebase_preferences(nu: PreferenceVector, omega_rule: str = "last") -> PreferenceVector:
    """Same policy, re-parametrized with each state's most probable action as the dependent one."""
    pi = policy_from_preferences(nu)
    omega = most_probable_omega(pi, omega_rule)
    if np.array_equal(omega, nu.index.omega):
        return nu
    index = index_from_counts(nu.index.counts, omega_rule, omega)
    with np.errstate(divide="ignore"):
        return PreferenceVector(np.log(pi.probs[index.independent]), index)


def random_policy(rng: np.random.Generator, index: SaIndexMap, floor: float = 1e-3) -> PolicyTable:
    """Dirichlet(1) action probabilities per state, mixed with uniform so none falls below ``floor``."""
    probs = np.empty(index.total)
    for i, k in enumerate(index.counts):
        row = rng.dirichlet(np.ones(k))
        probs[index.offsets[i]:index.offsets[i + 1]] = (1 - k * floor) * row + floor
    return PolicyTable(probs, index)
