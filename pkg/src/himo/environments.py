"""Benchmark MDPs: Tower of Hanoi, four-room grid worlds and small verification models."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mdp import MdpModel, check_model, load_model_file

Cell = tuple[int, int]

MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}
ROOM_ACTIONS = ("up", "down", "left", "right", "remain")


class LayoutError(ValueError):
    pass


def _deterministic_model(labels, action_labels, targets, rewards, start) -> MdpModel:
    n = len(labels)
    total = sum(len(a) for a in action_labels)
    P = np.zeros((total, n))
    R = np.zeros((total, n))
    for x, (k, r) in enumerate(zip(targets, rewards)):
        P[x, k] = 1.0
        R[x, k] = r
    return check_model(MdpModel(labels, action_labels, P, R, start))


# ---------------------------------------------------------------------------
# Tower of Hanoi


def hanoi_label(pegs: tuple[int, ...]) -> str:
    """Peg of every disk, largest disk first; ``"000"`` is all disks on peg 0."""
    return "".join(str(p) for p in reversed(pegs))


def hanoi_moves(pegs: tuple[int, ...]) -> list[tuple[int, int]]:
    """Legal (from_peg, to_peg) moves; ``pegs[d]`` is the peg of disk ``d`` (0 = smallest)."""
    top = {}
    for disk, peg in enumerate(pegs):
        top.setdefault(peg, disk)
    moves = []
    for src, dst in itertools.permutations(range(3), 2):
        if src in top and (dst not in top or top[dst] > top[src]):
            moves.append((src, dst))
    return sorted(moves)


def build_tower_of_hanoi(n_disks: int, reward: float = 1.0) -> MdpModel:
    """Deterministic Tower of Hanoi with an extra ``remain`` action at every state.

    Start has every disk on peg 0, the goal every disk on peg 2; the only
    reward is ``reward`` for remaining at the goal.
    """
    if n_disks < 1:
        raise ValueError("n_disks must be at least 1")
    states = list(itertools.product(range(3), repeat=n_disks))
    states.sort(key=hanoi_label)
    lookup = {s: i for i, s in enumerate(states)}
    goal = lookup[(2,) * n_disks]
    action_labels, targets, rewards = [], [], []
    for i, s in enumerate(states):
        labels = []
        for src, dst in hanoi_moves(s):
            disk = s.index(src)
            nxt = list(s)
            nxt[disk] = dst
            labels.append(f"{src}->{dst}")
            targets.append(lookup[tuple(nxt)])
            rewards.append(0.0)
        labels.append("remain")
        targets.append(i)
        rewards.append(reward if i == goal else 0.0)
        action_labels.append(labels)
    return _deterministic_model([hanoi_label(s) for s in states], action_labels, targets, rewards, lookup[(0,) * n_disks])


# ---------------------------------------------------------------------------
# room worlds


@dataclass(frozen=True)
class RoomLayout:
    width: int
    height: int
    walls: frozenset = frozenset()
    doorways: frozenset = frozenset()
    start: Cell = (0, 0)
    goal: Cell = (0, 0)
    # (entrance, exit); one-way, triggered by any movement action at the entrance
    wormhole: tuple[Cell, Cell] | None = None

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def walkable(self) -> list[Cell]:
        return [(r, c) for r in range(self.height) for c in range(self.width) if (r, c) not in self.walls]

    def step(self, cell: Cell, move: str) -> Cell:
        dr, dc = MOVES[move]
        nxt = (cell[0] + dr, cell[1] + dc)
        if not self.in_bounds(nxt) or nxt in self.walls:
            return cell
        return nxt

    def validate(self) -> list[str]:
        problems = []
        for name, cells in (("wall", self.walls), ("doorway", self.doorways)):
            for cell in cells:
                if not self.in_bounds(cell):
                    problems.append(f"{name} {cell} out of bounds")
        for cell in self.doorways & self.walls:
            problems.append(f"doorway {cell} is a wall")
        named = [("start", self.start), ("goal", self.goal)]
        if self.wormhole is not None:
            named += [("wormhole entrance", self.wormhole[0]), ("wormhole exit", self.wormhole[1])]
        for name, cell in named:
            if not self.in_bounds(cell) or cell in self.walls:
                problems.append(f"{name} {cell} is not walkable")
        if not problems:
            cells = self.walkable()
            seen = {cells[0]}
            queue = deque([cells[0]])
            while queue:
                cell = queue.popleft()
                for move in MOVES:
                    nxt = self.step(cell, move)
                    if nxt not in seen:
                        seen.add(nxt)
                        queue.append(nxt)
            if len(seen) != len(cells):
                problems.append(f"layout is disconnected: {len(cells) - len(seen)} unreachable cells")
        return problems


def cell_label(cell: Cell) -> str:
    return f"r{cell[0]}c{cell[1]}"


def four_room_layout(wormhole: bool = False) -> RoomLayout:
    """11x11 grid split by wall row 5 and wall column 5, one doorway per shared wall."""
    doorways = frozenset({(5, 2), (5, 8), (2, 5), (8, 5)})
    walls = frozenset({(5, c) for c in range(11)} | {(r, 5) for r in range(11)}) - doorways
    return RoomLayout(
        width=11,
        height=11,
        walls=walls,
        doorways=doorways,
        start=(1, 1),
        goal=(9, 9),
        wormhole=((3, 3), (9, 7)) if wormhole else None,
    )


def build_room_world(layout: RoomLayout, reward: float = 1.0) -> MdpModel:
    """Grid world with moves up/down/left/right plus ``remain``; bumping a wall stays put."""
    problems = layout.validate()
    if problems:
        raise LayoutError("; ".join(problems))
    cells = layout.walkable()
    lookup = {c: i for i, c in enumerate(cells)}
    targets, rewards = [], []
    for cell in cells:
        for action in ROOM_ACTIONS:
            if action == "remain":
                nxt = cell
            elif layout.wormhole is not None and cell == layout.wormhole[0]:
                nxt = layout.wormhole[1]
            else:
                nxt = layout.step(cell, action)
            targets.append(lookup[nxt])
            rewards.append(reward if action == "remain" and cell == layout.goal else 0.0)
    labels = [cell_label(c) for c in cells]
    return _deterministic_model(labels, [ROOM_ACTIONS] * len(cells), targets, rewards, lookup[layout.start])


def parse_grid(text: str) -> RoomLayout:
    """Read a text grid: ``#`` wall, ``.`` floor, ``S`` start, ``G`` goal, ``W`` wormhole endpoint.

    Doorways are inferred as floor cells squeezed between two walls (or a wall
    and the border) on opposite sides.
    """
    rows = [line.rstrip("\n") for line in text.splitlines() if line.strip()]
    if not rows:
        raise LayoutError("empty grid")
    width = max(len(r) for r in rows)
    walls, marks = set(), {"S": [], "G": [], "W": []}
    for r, line in enumerate(rows):
        for c, ch in enumerate(line.ljust(width, "#")):
            if ch == "#":
                walls.add((r, c))
            elif ch in marks:
                marks[ch].append((r, c))
            elif ch != ".":
                raise LayoutError(f"unexpected character {ch!r} at row {r}, column {c}")
    if len(marks["S"]) != 1 or len(marks["G"]) != 1:
        raise LayoutError("grid needs exactly one S and one G")
    if len(marks["W"]) not in (0, 2):
        raise LayoutError(f"grid needs 0 or 2 W cells, found {len(marks['W'])}")

    doorways = set()
    for r in range(len(rows)):
        for c in range(width):
            if (r, c) in walls:
                continue
            if {(r, c - 1), (r, c + 1)} <= walls or {(r - 1, c), (r + 1, c)} <= walls:
                doorways.add((r, c))
    wormhole = tuple(marks["W"]) if marks["W"] else None
    layout = RoomLayout(
        width=width,
        height=len(rows),
        walls=frozenset(walls),
        doorways=frozenset(doorways),
        start=marks["S"][0],
        goal=marks["G"][0],
        wormhole=wormhole,
    )
    problems = layout.validate()
    if problems:
        raise LayoutError("; ".join(problems))
    return layout


# ---------------------------------------------------------------------------
# small verification models


def self_loop(reward: float = 1.0, n_actions: int = 1) -> MdpModel:
    """One state whose every action loops back to itself."""
    labels = [f"a{j}" for j in range(n_actions)]
    return _deterministic_model(["s0"], [labels], [0] * n_actions, [reward] * n_actions, 0)


def chain2(reward: float = 1.0) -> MdpModel:
    """s0 chooses ``stay`` or ``go``; s1 is absorbing and pays ``reward`` per step."""
    return _deterministic_model(["s0", "s1"], [["stay", "go"], ["loop"]], [0, 1, 1], [0.0, 0.0, reward], 0)


def two_branches(reward: float = 1.0) -> MdpModel:
    """s0 enters one of two absorbing branches; a path visits exactly one."""
    return _deterministic_model(
        ["s0", "left", "right"], [["l", "r"], ["loop"], ["loop"]], [1, 2, 1, 2], [0.0, 0.0, reward, 0.0], 0
    )


def random_mdp(rng: np.random.Generator, n_states: int, max_actions: int, reward_scale: float = 1.0) -> MdpModel:
    """Random model with stochastic, partially sparse dynamics and Gaussian rewards."""
    counts = rng.integers(1, max_actions + 1, size=n_states)
    rows = []
    for _ in range(int(counts.sum())):
        support = rng.random(n_states) < 0.6
        support[rng.integers(n_states)] = True
        w = rng.random(n_states) * support
        rows.append(w / w.sum())
    P = np.array(rows)
    R = rng.normal(scale=reward_scale, size=P.shape)
    action_labels = [[f"a{j}" for j in range(c)] for c in counts]
    return check_model(MdpModel([f"s{i}" for i in range(n_states)], action_labels, P, R, 0))


# ---------------------------------------------------------------------------
# environment registry


@dataclass(frozen=True)
class Environment:
    """A model plus the named states the analysis refers to."""

    name: str
    model: MdpModel
    goal: int | None = None
    landmarks: dict = field(default_factory=dict)
    layout: RoomLayout | None = None


def _room_environment(name: str, layout: RoomLayout) -> Environment:
    model = build_room_world(layout)
    lookup = {c: i for i, c in enumerate(layout.walkable())}
    landmarks = {"doorways": tuple(sorted(lookup[c] for c in layout.doorways))}
    if layout.wormhole is not None:
        landmarks["wormhole"] = tuple(lookup[c] for c in layout.wormhole)
    return Environment(name, model, lookup[layout.goal], landmarks, layout)


def hanoi_environment(n_disks: int) -> Environment:
    model = build_tower_of_hanoi(n_disks)
    goal_label = "2" * n_disks
    # the goal cluster: states whose largest disk already sits on the goal peg
    cluster = tuple(i for i, s in enumerate(model.state_labels) if s[0] == "2")
    return Environment(f"toh{n_disks}", model, model.state_index(goal_label), {"goal_cluster": cluster})


BUILTINS = {
    "toh1": lambda: hanoi_environment(1),
    "toh2": lambda: hanoi_environment(2),
    "toh3": lambda: hanoi_environment(3),
    "rooms": lambda: _room_environment("rooms", four_room_layout(False)),
    "rooms-wormhole": lambda: _room_environment("rooms-wormhole", four_room_layout(True)),
    "chain2": lambda: Environment("chain2", chain2(), 1),
    "loop1": lambda: Environment("loop1", self_loop(1.0, 1), 0),
    "loop2": lambda: Environment("loop2", self_loop(1.0, 2), 0),
    "branches": lambda: Environment("branches", two_branches(), 1),
}


def load_environment(ref: str) -> Environment:
    """Resolve ``builtin:NAME``, a ``.grid`` layout file or a JSON model file."""
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        if name not in BUILTINS:
            raise KeyError(f"unknown builtin environment {name!r}; choose from {sorted(BUILTINS)}")
        return BUILTINS[name]()
    path = Path(ref)
    if path.suffix in (".grid", ".txt"):
        return _room_environment(path.stem, parse_grid(path.read_text(encoding="utf-8")))
    return Environment(path.stem, load_model_file(path))
