"""Policy divergence and counter difference measures over a run trace."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.special import rel_entr

from .optimizer import RunTrace


@dataclass(frozen=True)
class MeasureSeries:
    """``values[s, t]`` for state ``s`` at planning time ``t``."""

    values: np.ndarray
    kind: str
    peak_time: np.ndarray | None = None

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]


def policy_divergence(trace: RunTrace) -> MeasureSeries:
    """KL divergence of each state's current policy from its prior policy."""
    policies = trace.policy_array()
    terms = rel_entr(policies, policies[0][None, :])
    pd = np.add.reduceat(terms, trace.index.offsets[:-1], axis=1)
    return MeasureSeries(np.maximum(pd, 0.0).T, "pd")


def counter_difference(trace: RunTrace) -> MeasureSeries:
    """Change in expected visits to each state from the start, relative to the prior."""
    occ = trace.occupancy_array()
    return MeasureSeries((occ - occ[0][None, :]).T, "cd")


def max_normalize(series: MeasureSeries) -> MeasureSeries:
    """Divide each state's row by its largest absolute value; all-zero rows stay zero."""
    scale = np.max(np.abs(series.values), axis=1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    return MeasureSeries(series.values / safe, f"{series.kind}_norm")


def time_derivative(series: MeasureSeries, smoothing_window: int = 1, stencil: str = "central") -> MeasureSeries:
    """Derivative over planning time plus per-state peak times (lowest time wins ties).

    ``central`` uses central differences with one-sided differences at both
    ends; ``backward`` uses x[t] - x[t-1] with a forward difference at t = 0.
    """
    if series.n_times < 3:
        raise ValueError(f"need at least 3 time points, got {series.n_times}")
    if smoothing_window < 1:
        raise ValueError("smoothing window must be >= 1")
    values = series.values
    if smoothing_window > 1:
        values = uniform_filter1d(values, size=smoothing_window, axis=1, mode="nearest")
    if stencil == "central":
        deriv = np.gradient(values, axis=1)
    elif stencil == "backward":
        deriv = np.empty_like(values)
        deriv[:, 1:] = np.diff(values, axis=1)
        deriv[:, 0] = values[:, 1] - values[:, 0]
    else:
        raise ValueError(f"unknown stencil {stencil!r}")
    return MeasureSeries(deriv, f"{series.kind}_vel", np.argmax(deriv, axis=1))


@dataclass(frozen=True)
class Measures:
    pd: MeasureSeries
    cd: MeasureSeries
    pd_norm: MeasureSeries
    cd_norm: MeasureSeries
    pd_vel: MeasureSeries
    cd_vel: MeasureSeries


def compute_measures(trace: RunTrace, smoothing_window: int = 1) -> Measures:
    """All measure tables; velocities are taken of the max-normalized series."""
    pd = policy_divergence(trace)
    cd = counter_difference(trace)
    pd_norm = max_normalize(pd)
    cd_norm = max_normalize(cd)
    if pd.n_times >= 3:
        pd_vel = time_derivative(pd_norm, smoothing_window)
        cd_vel = time_derivative(cd_norm, smoothing_window)
    else:
        zeros = np.zeros_like(pd.values)
        peaks = np.zeros(pd.n_states, dtype=int)
        pd_vel = MeasureSeries(zeros, "pd_norm_vel", peaks)
        cd_vel = replace(pd_vel, kind="cd_norm_vel")
    return Measures(pd, cd, pd_norm, cd_norm, pd_vel, cd_vel)


def greedy_trajectory(model, actions, start: int | None = None, max_len: int | None = None) -> list[int]:
    """States visited by a deterministic policy on deterministic dynamics until a state repeats."""
    state = model.start_state if start is None else start
    offsets = model.offsets()
    seen, path = set(), []
    max_len = max_len or model.n_states
    while state not in seen and len(path) < max_len:
        seen.add(state)
        path.append(state)
        row = model.dynamics[offsets[state] + actions[state]]
        state = int(np.argmax(row))
    return path
