from collections import deque

import numpy as np
import pytest

from himo.environments import (
    LayoutError,
    RoomLayout,
    build_room_world,
    build_tower_of_hanoi,
    four_room_layout,
    load_environment,
    parse_grid,
)
from himo.mdp import dump_model, validate_model


def reachable(model, start, skip=()):
    offsets = model.offsets()
    seen, queue = {start}, deque([start])
    while queue:
        i = queue.popleft()
        for x in range(offsets[i], offsets[i + 1]):
            for k in np.flatnonzero(model.dynamics[x]):
                if k not in seen and k not in skip:
                    seen.add(int(k))
                    queue.append(int(k))
    return seen


def test_hanoi_one_disk():
    m = build_tower_of_hanoi(1)
    assert m.n_states == 3
    assert all(labels[-1] == "remain" and len(labels) == 3 for labels in m.action_labels)


def test_hanoi_three_disks():
    m = build_tower_of_hanoi(3)
    assert m.n_states == 27
    assert validate_model(m) == []
    goal = m.state_index("222")
    rewarded = np.argwhere(m.rewards != 0)
    assert rewarded.tolist() == [[m.row(goal, len(m.action_labels[goal]) - 1), goal]]
    for labels in m.action_labels:
        assert len(labels) - 1 in (2, 3)
    assert reachable(m, m.start_state) == set(range(27))


def test_room_two_cells():
    layout = RoomLayout(width=2, height=1, start=(0, 0), goal=(0, 1))
    m = build_room_world(layout)
    assert m.n_states == 2 and m.action_counts == (5, 5)
    up = m.row(0, 0)
    assert m.dynamics[up, 0] == 1.0


def test_four_rooms():
    env = load_environment("builtin:rooms")
    assert env.model.n_states == 104
    assert validate_model(env.model) == []
    assert reachable(env.model, env.model.start_state) == set(range(104))
    doors = set(env.landmarks["doorways"])
    assert env.goal not in reachable(env.model, env.model.start_state, skip=doors)


def test_wormhole_teleports():
    env = load_environment("builtin:rooms-wormhole")
    m, layout = env.model, env.layout
    cells = layout.walkable()
    entrance, exit_ = (cells.index(c) for c in layout.wormhole)
    for j, name in enumerate(m.action_labels[entrance]):
        target = int(np.argmax(m.dynamics[m.row(entrance, j)]))
        assert target == (entrance if name == "remain" else exit_)


GRID = """
#######
#S.#..#
#.....#
#..#.G#
#######
"""


def test_parse_grid():
    layout = parse_grid(GRID)
    assert layout.start == (1, 1) and layout.goal == (3, 5)
    assert (2, 3) in layout.doorways
    assert build_room_world(layout).n_states == 13


def test_parse_grid_rejects_one_wormhole_cell():
    with pytest.raises(LayoutError, match="W"):
        parse_grid(GRID.replace("S.#", "SW#"))


def test_disconnected_layout():
    with pytest.raises(LayoutError, match="disconnected"):
        parse_grid("#####\n#S#G#\n#####")


def test_load_environment_from_files(tmp_path):
    grid = tmp_path / "tiny.grid"
    grid.write_text(GRID)
    assert load_environment(str(grid)).model.n_states == 13
    model_file = tmp_path / "toh1.json"
    model_file.write_text(dump_model(build_tower_of_hanoi(1)))
    assert load_environment(str(model_file)).model == build_tower_of_hanoi(1)


def test_unknown_builtin():
    with pytest.raises(KeyError):
        load_environment("builtin:nothing")


def test_default_layout_walls():
    layout = four_room_layout()
    # row 5 and column 5 share one cell; four of those 21 cells are doorways
    assert len(layout.walls) == 17
