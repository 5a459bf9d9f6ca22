import json
from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from waynav.controller import RobotState
from waynav.world import (
    GridCell,
    MalformedMapError,
    MapInvariantError,
    SensorModel,
    WorldMap,
    build_graph,
    cell_center,
    cell_of,
    generate_scenario,
    is_traversable,
    load_map,
    remove_vertex,
    save_map,
    sense,
)


def flood_reachable(world):
    """Independent BFS oracle over free cells."""
    free = {(r, c) for r in range(world.height) for c in range(world.width)} - set(world.obstacles)
    seen = {tuple(world.start)} if tuple(world.start) in free else set()
    q = deque(seen)
    while q:
        r, c = q.popleft()
        for nb in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if nb in free and nb not in seen:
                seen.add(nb)
                q.append(nb)
    return all(tuple(c) in seen for c in [world.goal, *world.waypoints])


def test_cell_center_and_cell_of():
    assert cell_center((2, 3)) == (3.5, 2.5)
    assert cell_of(3.5, 2.5, 10, 10) == GridCell(2, 3)
    # clamped to the grid
    assert cell_of(-0.1, 10.2, 10, 10) == GridCell(9, 0)


def test_generate_seed7():
    w = generate_scenario(7, 10, 10, (25, 35), 8)
    assert w.start == (0, 0) and w.goal == (9, 9)
    assert 25 <= len(w.obstacles) <= 35
    assert len(set(w.waypoints)) == 8
    assert not set(w.waypoints) & w.obstacles
    assert is_traversable(w) and flood_reachable(w)


def test_generate_empty_2x2():
    w = generate_scenario(3, 2, 2, (0, 0), 0)
    assert w.obstacles == frozenset()
    assert w.start == (0, 0) and w.goal == (1, 1)


def test_generate_deterministic():
    assert save_map(generate_scenario(7)) == save_map(generate_scenario(7))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generated_maps_are_traversable(seed):
    w = generate_scenario(seed, 10, 10, (25, 35), 7)
    assert flood_reachable(w)
    w.validate()


def test_build_graph_counts():
    w = WorldMap(2, 2, frozenset(), (), (0, 0), (1, 1))
    g = build_graph(w)
    assert len(g.vertices) == 4 and len(g.edges) == 4
    g = build_graph(w, {(0, 1)})
    assert len(g.vertices) == 3 and len(g.edges) == 2
    line = WorldMap(3, 1, frozenset(), (), (0, 0), (0, 2))
    g = build_graph(line, {(0, 1)})
    assert len(g.vertices) == 2 and len(g.edges) == 0


def test_neighbor_order_east_north_west_south():
    g = build_graph(WorldMap(3, 3, frozenset(), (), (0, 0), (2, 2)))
    assert g.neighbors(GridCell(1, 1)) == [(1, 2), (2, 1), (1, 0), (0, 1)]


def test_remove_vertex():
    g = build_graph(WorldMap(3, 3, frozenset(), (), (0, 0), (2, 2)))
    g2 = remove_vertex(g, (1, 1))
    assert len(g2.vertices) == 8 and len(g.edges) - len(g2.edges) == 4
    assert remove_vertex(g2, (1, 1)) == g2
    for v in sorted(g.vertices):
        g = remove_vertex(g, v)
    assert not g.vertices and not g.edges


def test_sense_disc():
    w = WorldMap(6, 2, frozenset({(0, 1), (0, 4)}), (), (1, 0), (1, 5))
    s = SensorModel(radius=2.0)
    found = sense(w, RobotState(0.5, 0.5, 0.0), s)
    assert GridCell(0, 1) in found and GridCell(0, 4) not in found
    # boundary is closed: (2.5, 0.5) is exactly 2.0 away
    w2 = WorldMap(6, 2, frozenset({(0, 2)}), (), (1, 0), (1, 5))
    assert sense(w2, RobotState(0.5, 0.5, 0.0), s) == {GridCell(0, 2)}
    assert sense(w2, RobotState(0.5, 0.5, 0.0), s, {(0, 2)}) == set()


def test_sensor_model_validation():
    with pytest.raises(ValueError):
        SensorModel(radius=0)


def test_is_traversable_examples():
    assert is_traversable(WorldMap(3, 3, frozenset(), ((1, 1), (0, 2)), (0, 0), (2, 2)))
    assert not is_traversable(WorldMap(3, 1, frozenset({(0, 1)}), (), (0, 0), (0, 2)))
    w = generate_scenario(7, 10, 10, (25, 35), 8)
    target = w.waypoints[0]
    walls = {(target[0] + dr, target[1] + dc) for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0))}
    walls = {c for c in walls if 0 <= c[0] < 10 and 0 <= c[1] < 10}
    walls -= {tuple(w.start), tuple(w.goal)} | {tuple(p) for p in w.waypoints}
    walled = WorldMap(10, 10, w.obstacles | walls, w.waypoints, w.start, w.goal)
    assert is_traversable(walled) == flood_reachable(walled)


def test_map_round_trip():
    w = generate_scenario(7)
    assert load_map(save_map(w)) == w


def test_load_map_errors():
    doc = json.loads(save_map(generate_scenario(7)))
    missing = dict(doc)
    del missing["goal"]
    with pytest.raises(MalformedMapError, match="goal"):
        load_map(json.dumps(missing))
    bad = dict(doc, obstacles=doc["obstacles"] + [[10, 3]])
    with pytest.raises(MapInvariantError, match="out of bounds"):
        load_map(json.dumps(bad))
    with pytest.raises(MalformedMapError, match="line"):
        load_map("{not json")
