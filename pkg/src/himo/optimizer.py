"""Natural path gradient ascent on action preferences."""

from __future__ import annotations

import contextlib
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .geometry import check_lambda, occupancy, path_geometry, transition_matrix, value_from_occupancy
from .mdp import MdpModel, SaIndexMap, expected_rewards, sa_index
from .policy import PreferenceVector, init_random_policy, policy_from_preferences, rebase_preferences

CONVERGED_REASONS = ("trivial", "value_tol", "step_tol")


@dataclass(frozen=True)
class HimoConfig:
    lam: float = 0.95
    max_iters: int = 1000
    value_tol: float = 1e-10
    step_tol: float = 1e-9
    # Marquardt ridge: each Fisher diagonal entry is inflated by this fraction of itself
    damping: float = 1e-9
    step_scale: float = 1.0
    backtrack_factor: float = 0.5
    max_backtracks: int = 60
    omega_rule: str = "last"
    # move each state's dependent action to its most probable action before every step
    rebase_omega: bool = True

    def __post_init__(self):
        check_lambda(self.lam)
        if self.max_iters < 0 or self.max_backtracks < 0:
            raise ValueError("iteration limits must be non-negative")
        if self.value_tol <= 0 or self.step_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        if not 0.0 < self.step_scale <= 1.0:
            raise ValueError("step_scale must lie in (0, 1]")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StepDiagnostics:
    value_before: float
    value_after: float
    grad_norm: float
    step_scale: float
    backtracks: int
    step_norm: float
    occupancy: np.ndarray = field(repr=False)


class StepFailure(RuntimeError):
    """No admissible step was found; carries the gradient norm and, from run_himo, the trace."""

    def __init__(self, grad_norm: float, backtracks: int, trace: "RunTrace | None" = None):
        self.grad_norm = grad_norm
        self.backtracks = backtracks
        self.trace = trace
        super().__init__(f"no feasible non-decreasing step after {backtracks} backtracks (|grad|_inf = {grad_norm:.3e})")


def _value(model: MdpModel, nu: PreferenceVector, lam: float, rbar: np.ndarray) -> tuple[float, np.ndarray]:
    pi = policy_from_preferences(nu)
    d0 = occupancy(transition_matrix(model, pi), lam, model.start_state)
    return value_from_occupancy(d0, pi, rbar, nu.index), d0


def newton_direction(fisher: np.ndarray, gradient: np.ndarray, damping: float) -> np.ndarray:
    """Solve (I + rho * diag(I)) x = g for the natural gradient direction.

    Coordinates with a zero Fisher diagonal (actions whose probability or
    state occupancy underflowed) carry no information and get a zero step.
    """
    direction = np.zeros_like(gradient)
    if gradient.size == 0 or not np.any(gradient):
        return direction
    diag = np.diag(fisher)
    active = np.flatnonzero(diag > 0)
    # symmetric Jacobi scaling; the per-state blocks differ in scale by many decades
    s = 1.0 / np.sqrt(diag[active])
    A = fisher[np.ix_(active, active)] * np.outer(s, s)
    A[np.diag_indices_from(A)] = 1.0 + damping
    direction[active] = s * scipy.linalg.solve(A, s * gradient[active], assume_a="sym")
    return direction


def himo_step(model: MdpModel, nu: PreferenceVector, config: HimoConfig) -> tuple[PreferenceVector, StepDiagnostics]:
    """One natural path gradient step with feasibility and monotonicity backtracking.

    The returned preferences may use a different dependent-action designation
    than ``nu`` when ``config.rebase_omega`` is set; the policy is what matters.
    """
    if config.rebase_omega:
        nu = rebase_preferences(nu, config.omega_rule)
    pi = policy_from_preferences(nu)
    geom = path_geometry(model, pi, config.lam)
    grad_norm = float(np.max(np.abs(geom.gradient))) if geom.gradient.size else 0.0
    direction = newton_direction(geom.fisher, geom.gradient, config.damping)

    if not np.any(direction):
        return nu, StepDiagnostics(geom.value, geom.value, grad_norm, 0.0, 0, 0.0, geom.d0)

    scale = config.step_scale
    for backtracks in range(config.max_backtracks + 1):
        candidate = PreferenceVector(nu.values + scale * direction, nu.index)
        if candidate.is_feasible():
            value, d0 = _value(model, candidate, config.lam, geom.rbar)
            if value >= geom.value:
                step_norm = scale * float(np.max(np.abs(direction)))
                return candidate, StepDiagnostics(geom.value, value, grad_norm, scale, backtracks, step_norm, d0)
        scale *= config.backtrack_factor
    raise StepFailure(grad_norm, config.max_backtracks)


@dataclass
class RunTrace:
    """Iterates of one optimization run; row ``t`` is planning time ``t``.

    ``grad_norms``, ``step_scales`` and ``backtracks`` describe the step that
    produced iterate ``t`` (zero for the prior at ``t = 0``).
    """

    index: SaIndexMap
    preferences: list[PreferenceVector] = field(default_factory=list)
    policies: list[np.ndarray] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    occupancies: list[np.ndarray] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    step_scales: list[float] = field(default_factory=list)
    backtracks: list[int] = field(default_factory=list)
    reason: str = "running"

    def append(self, nu: PreferenceVector, value: float, d0: np.ndarray, grad_norm=0.0, step_scale=0.0, backtracks=0):
        self.preferences.append(nu)
        self.policies.append(np.array(policy_from_preferences(nu).probs))
        self.values.append(float(value))
        self.occupancies.append(np.array(d0))
        self.grad_norms.append(float(grad_norm))
        self.step_scales.append(float(step_scale))
        self.backtracks.append(int(backtracks))

    @property
    def n_iters(self) -> int:
        return len(self.values) - 1

    @property
    def converged(self) -> bool:
        return self.reason in CONVERGED_REASONS

    def final_preferences(self) -> PreferenceVector:
        return self.preferences[-1]

    def final_policy(self):
        return policy_from_preferences(self.final_preferences())

    def policy_array(self) -> np.ndarray:
        return np.array(self.policies)

    def occupancy_array(self) -> np.ndarray:
        return np.array(self.occupancies)


@contextlib.contextmanager
def deterministic_threads():
    """Pin BLAS to one thread unless HIMO_DETERMINISTIC=0."""
    if os.environ.get("HIMO_DETERMINISTIC", "1") == "0":
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


def run_himo(model: MdpModel, config: HimoConfig | None = None) -> RunTrace:
    """Optimize from the uniform policy until a convergence test or the iteration cap fires."""
    config = config or HimoConfig()
    index = sa_index(model, config.omega_rule)
    nu = init_random_policy(model, index)
    rbar = expected_rewards(model)
    trace = RunTrace(index)
    with deterministic_threads():
        value, d0 = _value(model, nu, config.lam, rbar)
        trace.append(nu, value, d0)
        if index.independent_count == 0:
            trace.reason = "trivial"
            return trace
        for _ in range(config.max_iters):
            try:
                nu, diag = himo_step(model, nu, config)
            except StepFailure as exc:
                trace.reason = "step_failure"
                exc.trace = trace
                raise
            trace.append(nu, diag.value_after, diag.occupancy, diag.grad_norm, diag.step_scale, diag.backtracks)
            if abs(diag.value_after - diag.value_before) < config.value_tol:
                trace.reason = "value_tol"
                return trace
            if diag.step_norm < config.step_tol:
                trace.reason = "step_tol"
                return trace
    trace.reason = "max_iters"
    return trace
