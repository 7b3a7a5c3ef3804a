"""Exact path-space quantities at a fixed policy.

The path measure is the one generated by running the policy from the start
state where, after each completed transition, the episode continues with
probability ``lam``. Every path therefore contains at least one transition.
Under that measure:

* ``D = (I - lam T)^-1`` counts expected visits to each state,
* ``E[x, k] = lam * sum_k' p[x, k'] D[k', k]`` counts visits to ``k`` strictly
  after the state-action ``x``,
* ``C[x, y]`` is the second moment <n_x n_y> of the state-action counters,
* the Fisher information is the covariance of the path score with respect to
  the independent preferences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .mdp import MdpModel, SaIndexMap, expected_rewards
from .policy import PolicyTable


def check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ValueError(f"foresight must lie in (0, 1), got {lam}")
    return lam


def _probs(pi) -> np.ndarray:
    return pi.probs if isinstance(pi, PolicyTable) else np.asarray(pi, dtype=float)


def transition_matrix(model: MdpModel, pi) -> np.ndarray:
    """State-to-state transition matrix of the Markov chain induced by ``pi``."""
    weighted = _probs(pi)[:, None] * model.dynamics
    return np.add.reduceat(weighted, model.offsets()[:-1], axis=0)


def successor_representation(T: np.ndarray, lam: float) -> np.ndarray:
    lam = check_lambda(lam)
    n = T.shape[0]
    lu = scipy.linalg.lu_factor(np.eye(n) - lam * T)
    return scipy.linalg.lu_solve(lu, np.eye(n))


def occupancy(T: np.ndarray, lam: float, start: int) -> np.ndarray:
    """Row ``start`` of the successor representation, from a single solve."""
    lam = check_lambda(lam)
    n = T.shape[0]
    e = np.zeros(n)
    e[start] = 1.0
    return scipy.linalg.solve((np.eye(n) - lam * T).T, e)


def sa_successor(model: MdpModel, D: np.ndarray, lam: float) -> np.ndarray:
    return check_lambda(lam) * (model.dynamics @ D)


def counter_correlations(D, E, pi, index: SaIndexMap, start: int) -> np.ndarray:
    p = _probs(pi)
    s = index.state_of
    first = D[start, s] * p
    # ordered pairs: x occurs strictly before y
    before = first[:, None] * E[:, s] * p[None, :]
    C = before + before.T
    C[np.diag_indices_from(C)] += first
    return C


def _omega_ratio(p: np.ndarray, index: SaIndexMap) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ind = index.independent
    om = index.omega_flat[index.state_of[ind]]
    return ind, om, p[ind] / p[om]


def fisher_information(C, pi, index: SaIndexMap) -> np.ndarray:
    """Fisher information of the path distribution over the independent preferences."""
    p = _probs(pi)
    ind, om, r = _omega_ratio(p, index)
    cross = C[np.ix_(ind, om)] * r[None, :]
    # cross + cross.T is exactly symmetric, which keeps the result exactly symmetric
    return C[np.ix_(ind, ind)] - (cross + cross.T) + np.outer(r, r) * C[np.ix_(om, om)]


def path_gradient(C, pi, rbar, index: SaIndexMap) -> np.ndarray:
    """Gradient of the policy value with respect to the independent preferences."""
    p = _probs(pi)
    ind, om, r = _omega_ratio(p, index)
    h = C @ rbar
    return h[ind] - r * h[om]


def policy_value(D, pi, rbar, index: SaIndexMap, start: int) -> float:
    return float(np.dot(D[start, index.state_of] * _probs(pi), rbar))


def value_from_occupancy(d0, pi, rbar, index: SaIndexMap) -> float:
    return float(np.dot(d0[index.state_of] * _probs(pi), rbar))


@dataclass(frozen=True, eq=False)
class PathGeometry:
    T: np.ndarray
    D: np.ndarray
    E: np.ndarray
    C: np.ndarray
    fisher: np.ndarray
    gradient: np.ndarray
    rbar: np.ndarray
    value: float
    start: int

    @property
    def d0(self) -> np.ndarray:
        return self.D[self.start]


def path_geometry(model: MdpModel, pi: PolicyTable, lam: float) -> PathGeometry:
    """Every analytic quantity needed for one natural-gradient step."""
    index = pi.index
    rbar = expected_rewards(model)
    T = transition_matrix(model, pi)
    D = successor_representation(T, lam)
    E = sa_successor(model, D, lam)
    C = counter_correlations(D, E, pi, index, model.start_state)
    return PathGeometry(
        T=T,
        D=D,
        E=E,
        C=C,
        fisher=fisher_information(C, pi, index),
        gradient=path_gradient(C, pi, rbar, index),
        rbar=rbar,
        value=policy_value(D, pi, rbar, index, model.start_state),
        start=model.start_state,
    )
