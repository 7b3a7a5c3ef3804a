"""Finite MDP data model, the JSON model-file format and state-action indexing.

Dynamics and rewards are stored as flat ``(total_sa, n_states)`` arrays whose
rows are ordered state by state, then action by action. ``SaIndexMap`` is the
single source of truth for that ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ROW_SUM_TOL = 1e-12
FILE_ROW_SUM_TOL = 1e-9
# rows already this close to 1 are left untouched so load/dump round trips bit-exactly
_RENORMALIZE_EPS = 2.0**-50

OMEGA_RULES = ("last", "first")


class ModelError(Exception):
    """Base class for model construction and loading failures."""


class ModelParseError(ModelError):
    def __init__(self, message: str, line: int | None = None, where: str | None = None):
        self.line = line
        self.where = where
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if where is not None:
            prefix.append(where)
        super().__init__(f"{': '.join(prefix)}: {message}" if prefix else message)


class ModelValidationError(ModelError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid model: " + "; ".join(self.violations))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MdpModel:
    """A finite MDP with stochastic dynamics.

    ``dynamics[x, k]`` is the probability of landing in state ``k`` after the
    state-action with flat index ``x``; ``rewards`` has the same layout.
    """

    state_labels: tuple[str, ...]
    action_labels: tuple[tuple[str, ...], ...]
    dynamics: np.ndarray
    rewards: np.ndarray
    start_state: int = 0

    def __post_init__(self):
        object.__setattr__(self, "state_labels", tuple(self.state_labels))
        object.__setattr__(self, "action_labels", tuple(tuple(a) for a in self.action_labels))
        object.__setattr__(self, "dynamics", _frozen(self.dynamics))
        object.__setattr__(self, "rewards", _frozen(self.rewards))
        n = len(self.state_labels)
        total = sum(len(a) for a in self.action_labels)
        if len(self.action_labels) != n:
            raise ValueError("one action list per state is required")
        for name in ("dynamics", "rewards"):
            if getattr(self, name).shape != (total, n):
                raise ValueError(f"{name} must have shape {(total, n)}, got {getattr(self, name).shape}")

    @property
    def n_states(self) -> int:
        return len(self.state_labels)

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.action_labels)

    @property
    def total_sa(self) -> int:
        return self.dynamics.shape[0]

    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.action_counts)]).astype(int)

    def row(self, i: int, j: int) -> int:
        return int(self.offsets()[i]) + j

    def state_index(self, label: str) -> int:
        return self.state_labels.index(label)

    def __eq__(self, other):
        if not isinstance(other, MdpModel):
            return NotImplemented
        return (
            self.state_labels == other.state_labels
            and self.action_labels == other.action_labels
            and self.start_state == other.start_state
            and np.array_equal(self.dynamics, other.dynamics)
            and np.array_equal(self.rewards, other.rewards)
        )

    __hash__ = None


def validate_model(model: MdpModel) -> list[str]:
    """Return every violated model invariant; an empty list means the model is valid."""
    problems = []
    counts = model.action_counts
    for i, c in enumerate(counts):
        if c < 1:
            problems.append(f"state {i} has no actions")
    if not 0 <= model.start_state < model.n_states:
        problems.append(f"start state {model.start_state} out of range")
    offsets = model.offsets()
    for i in range(model.n_states):
        for j in range(counts[i]):
            x = offsets[i] + j
            p = model.dynamics[x]
            for k in np.flatnonzero((p < 0) | (p > 1) | ~np.isfinite(p)):
                problems.append(f"entry ({i},{j},{k}) = {p[k]:g} outside [0, 1]")
            s = float(p.sum())
            if not abs(s - 1.0) <= ROW_SUM_TOL:
                problems.append(f"row ({i},{j}) sums to {s:.15g}")
            bad = (p > 0) & ~np.isfinite(model.rewards[x])
            for k in np.flatnonzero(bad):
                problems.append(f"reward ({i},{j},{k}) is not finite")
    return problems


def check_model(model: MdpModel) -> MdpModel:
    problems = validate_model(model)
    if problems:
        raise ModelValidationError(problems)
    return model


@dataclass(frozen=True, eq=False)
class SaIndexMap:
    """Flattening of (state, action) pairs plus the dependent action of each state."""

    offsets: np.ndarray
    omega: np.ndarray
    state_of: np.ndarray = field(repr=False)
    omega_flat: np.ndarray = field(repr=False)
    independent: np.ndarray = field(repr=False)

    @property
    def n_states(self) -> int:
        return len(self.omega)

    @property
    def total(self) -> int:
        return int(self.offsets[-1])

    @property
    def independent_count(self) -> int:
        return self.total - self.n_states

    def flatten(self, i: int, j: int) -> int:
        if not 0 <= j < self.offsets[i + 1] - self.offsets[i]:
            raise IndexError(f"action {j} out of range at state {i}")
        return int(self.offsets[i] + j)

    def unflatten(self, x: int) -> tuple[int, int]:
        i = int(self.state_of[x])
        return i, int(x - self.offsets[i])

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def is_omega(self, x: int) -> bool:
        return bool(self.omega_flat[self.state_of[x]] == x)


def sa_index(model: MdpModel, omega_rule: str = "last", omega=None) -> SaIndexMap:
    """Build the state-action flattening and designate one dependent action per state.

    ``omega_rule`` is ``"last"`` (highest action index, the default) or
    ``"first"``; an explicit per-state ``omega`` array overrides it.
    """
    return index_from_counts(model.action_counts, omega_rule, omega)


def index_from_counts(counts, omega_rule: str = "last", omega=None) -> SaIndexMap:
    if omega_rule not in OMEGA_RULES:
        raise ValueError(f"unknown omega rule {omega_rule!r}; expected one of {OMEGA_RULES}")
    counts = np.asarray(counts, dtype=int)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)
    if omega is None:
        omega = counts - 1 if omega_rule == "last" else np.zeros_like(counts)
    else:
        omega = np.array(omega, dtype=int)
        if omega.shape != counts.shape or np.any(omega < 0) or np.any(omega >= counts):
            raise ValueError("omega must hold one valid action index per state")
    state_of = np.repeat(np.arange(len(counts)), counts)
    omega_flat = offsets[:-1] + omega
    mask = np.ones(offsets[-1], dtype=bool)
    mask[omega_flat] = False
    arrays = dict(
        offsets=offsets,
        omega=omega,
        state_of=state_of,
        omega_flat=omega_flat,
        independent=np.flatnonzero(mask),
    )
    for a in arrays.values():
        a.setflags(write=False)
    return SaIndexMap(**arrays)


def expected_rewards(model: MdpModel) -> np.ndarray:
    """Dynamics-averaged one-step reward for every flat state-action."""
    p = model.dynamics
    return np.where(p > 0, p * np.where(p > 0, model.rewards, 0.0), 0.0).sum(axis=1)


# ---------------------------------------------------------------------------
# model files


def _line_of(text: str, needle: str) -> int | None:
    for n, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return n
    return None


def load_model(text: str) -> MdpModel:
    """Parse a JSON model file, validate it and renormalize each transition row."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ModelParseError("top level must be an object")
    states = doc.get("states")
    if not isinstance(states, list) or not states:
        raise ModelParseError("'states' must be a non-empty list", where="states")

    names = []
    for si, st in enumerate(states):
        if not isinstance(st, dict) or not isinstance(st.get("name"), str):
            raise ModelParseError("each state needs a string 'name'", where=f"states[{si}]")
        names.append(st["name"])
    if len(set(names)) != len(names):
        raise ModelParseError("duplicate state names", where="states")
    lookup = {name: i for i, name in enumerate(names)}

    if "start" not in doc:
        raise ModelParseError("missing 'start'", where="start")
    if doc["start"] not in lookup:
        raise ModelParseError(f"unknown start state {doc['start']!r}", line=_line_of(text, '"start"'), where="start")

    action_labels = []
    p_rows, r_rows = [], []
    problems = []
    for si, st in enumerate(states):
        actions = st.get("actions")
        if not isinstance(actions, list) or not actions:
            raise ModelParseError("'actions' must be a non-empty list", where=f"states[{si}].actions")
        labels = []
        for ai, act in enumerate(actions):
            where = f"states[{si}].actions[{ai}]"
            if not isinstance(act, dict):
                raise ModelParseError("action must be an object", where=where)
            labels.append(str(act.get("name", ai)))
            p = np.zeros(len(names))
            r = np.zeros(len(names))
            transitions = act.get("transitions")
            if not isinstance(transitions, list) or not transitions:
                raise ModelParseError("'transitions' must be a non-empty list", where=where)
            for ti, tr in enumerate(transitions):
                tw = f"{where}.transitions[{ti}]"
                if not isinstance(tr, dict):
                    raise ModelParseError("transition must be an object", where=tw)
                target = tr.get("to")
                if target not in lookup:
                    raise ModelParseError(
                        f"unknown state {target!r}", line=_line_of(text, f'"{target}"'), where=f"{tw}.to"
                    )
                for key in ("p", "r"):
                    if key == "p" and key not in tr:
                        raise ModelParseError("missing 'p'", where=tw)
                    val = tr.get(key, 0.0)
                    if isinstance(val, bool) or not isinstance(val, (int, float)):
                        raise ModelParseError(f"'{key}' must be a number", where=f"{tw}.{key}")
                k = lookup[target]
                p[k] += float(tr["p"])
                r[k] = float(tr.get("r", 0.0))
            s = float(p.sum())
            if (p < 0).any():
                problems.append(f"negative probability in row ({si},{ai})")
            elif abs(s - 1.0) > FILE_ROW_SUM_TOL:
                problems.append(f"row ({si},{ai}) sums to {s:.15g}")
            elif abs(s - 1.0) > _RENORMALIZE_EPS:
                p = p / s
            p_rows.append(p)
            r_rows.append(r)
        action_labels.append(labels)
    if problems:
        raise ModelValidationError(problems)

    model = MdpModel(
        state_labels=names,
        action_labels=action_labels,
        dynamics=np.array(p_rows),
        rewards=np.array(r_rows),
        start_state=lookup[doc["start"]],
    )
    return check_model(model)


def model_to_dict(model: MdpModel) -> dict:
    states = []
    offsets = model.offsets()
    for i, name in enumerate(model.state_labels):
        actions = []
        for j, label in enumerate(model.action_labels[i]):
            x = offsets[i] + j
            transitions = [
                {"to": model.state_labels[k], "p": float(model.dynamics[x, k]), "r": float(model.rewards[x, k])}
                for k in np.flatnonzero(model.dynamics[x] > 0)
            ]
            actions.append({"name": label, "transitions": transitions})
        states.append({"name": name, "actions": actions})
    return {"states": states, "start": model.state_labels[model.start_state]}


def dump_model(model: MdpModel) -> str:
    """Serialize to the JSON model-file format (floats are written with full precision)."""
    return json.dumps(model_to_dict(model), indent=1)


def load_model_file(path) -> MdpModel:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read())

