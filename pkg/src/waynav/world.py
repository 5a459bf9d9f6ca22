"""Grid world, random scenarios, idealized obstacle sensing and the navigation graph.

Cells are addressed as ``(row, col)``. A cell is a unit square whose center sits
at ``x = col + 0.5``, ``y = row + 0.5`` (meters), so "east" is ``col + 1`` and
"north" is ``row + 1``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

__all__ = [
    "GridCell",
    "WorldMap",
    "NavGraph",
    "SensorModel",
    "ScenarioGenerationError",
    "MalformedMapError",
    "MapInvariantError",
    "generate_scenario",
    "build_graph",
    "sense",
    "remove_vertex",
    "is_traversable",
    "save_map",
    "load_map",
    "cell_center",
    "cell_of",
]

# East, North, West, South. Order is load-bearing: BFS tie-breaking uses it.
NEIGHBOR_OFFSETS = ((0, 1), (1, 0), (0, -1), (-1, 0))


class ScenarioGenerationError(RuntimeError):
    """No valid map was found within the retry budget."""


class MalformedMapError(ValueError):
    """A map document could not be parsed."""


class MapInvariantError(ValueError):
    """A map violates bounds, disjointness or traversability."""


class GridCell(NamedTuple):
    row: int
    col: int

    @property
    def center(self) -> tuple[float, float]:
        return (self.col + 0.5, self.row + 0.5)


def cell_center(cell: tuple[int, int]) -> tuple[float, float]:
    return (cell[1] + 0.5, cell[0] + 0.5)


def cell_of(x: float, y: float, width: int, height: int) -> GridCell:
    """Cell containing ``(x, y)``, clamped to the grid."""
    col = min(max(int(math.floor(x)), 0), width - 1)
    row = min(max(int(math.floor(y)), 0), height - 1)
    return GridCell(row, col)


@dataclass(frozen=True)
class WorldMap:
    width: int
    height: int
    obstacles: frozenset
    waypoints: tuple
    start: GridCell
    goal: GridCell
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "obstacles", frozenset(GridCell(*c) for c in self.obstacles))
        object.__setattr__(self, "waypoints", tuple(GridCell(*c) for c in self.waypoints))
        object.__setattr__(self, "start", GridCell(*self.start))
        object.__setattr__(self, "goal", GridCell(*self.goal))

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    @property
    def free_cells(self) -> set:
        return {
            GridCell(r, c)
            for r in range(self.height)
            for c in range(self.width)
            if (r, c) not in self.obstacles
        }

    def validate(self) -> None:
        """Raise :class:`MapInvariantError` if any map invariant fails."""
        if self.width < 1 or self.height < 1:
            raise MapInvariantError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        named = [("start", self.start), ("goal", self.goal)]
        named += [(f"waypoints[{i}]", w) for i, w in enumerate(self.waypoints)]
        named += [(f"obstacle {tuple(o)}", o) for o in sorted(self.obstacles)]
        for name, cell in named:
            if not self.in_bounds(cell):
                raise MapInvariantError(f"{name} {tuple(cell)} out of bounds")
        for name, cell in named[: 2 + len(self.waypoints)]:
            if cell in self.obstacles:
                raise MapInvariantError(f"{name} {tuple(cell)} is an obstacle")
        if not is_traversable(self):
            raise MapInvariantError("start, goal and waypoints are not mutually reachable")


@dataclass(frozen=True)
class NavGraph:
    """Undirected 4-connected grid graph.

    Edges are implied by the vertex set: two vertices are joined iff they are
    orthogonal neighbours.
    """

    width: int
    height: int
    vertices: frozenset = field(default_factory=frozenset)

    def __contains__(self, cell) -> bool:
        return cell in self.vertices

    def neighbors(self, cell: GridCell) -> list:
        out = []
        for dr, dc in NEIGHBOR_OFFSETS:
            nb = GridCell(cell[0] + dr, cell[1] + dc)
            if nb in self.vertices:
                out.append(nb)
        return out

    @property
    def edges(self) -> frozenset:
        out = set()
        for v in self.vertices:
            for nb in ((v[0], v[1] + 1), (v[0] + 1, v[1])):
                if nb in self.vertices:
                    out.add((v, GridCell(*nb)))
        return frozenset(out)


@dataclass(frozen=True)
class SensorModel:
    radius: float = 2.5
    reveal_mode: str = "DISC"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"sensor radius must be positive, got {self.radius}")
        if self.reveal_mode != "DISC":
            raise ValueError(f"unsupported reveal mode {self.reveal_mode!r}")


def _components_connected(free: set, cells: Iterable) -> bool:
    cells = list(cells)
    if not cells:
        return True
    if any(c not in free for c in cells):
        return False
    seen = {cells[0]}
    queue = deque([cells[0]])
    while queue:
        r, c = queue.popleft()
        for dr, dc in NEIGHBOR_OFFSETS:
            nb = (r + dr, c + dc)
            if nb in free and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return all(c in seen for c in cells)


def is_traversable(world: WorldMap) -> bool:
    """True iff start, goal and every waypoint share one 4-connected free component."""
    free = {tuple(c) for c in world.free_cells}
    cells = [tuple(world.start), tuple(world.goal)] + [tuple(w) for w in world.waypoints]
    return _components_connected(free, cells)


def generate_scenario(
    seed: int,
    width: int = 10,
    height: int = 10,
    n_obstacles: tuple[int, int] = (25, 35),
    n_waypoints: int = 8,
    max_attempts: int = 10_000,
) -> WorldMap:
    """Random map with start at ``(0, 0)`` and goal at the opposite corner.

    Obstacle count is drawn uniformly from the inclusive range ``n_obstacles``;
    obstacles and then waypoints are placed uniformly among the remaining cells,
    and the draw is rejected until the map is traversable.
    """
    lo, hi = n_obstacles
    if width < 2 or height < 2:
        raise ValueError("width and height must be at least 2")
    if lo < 0 or hi < lo:
        raise ValueError(f"bad obstacle range {n_obstacles}")
    if n_waypoints + hi + 2 > width * height:
        raise ValueError("too many obstacles and waypoints for the grid")

    start = GridCell(0, 0)
    goal = GridCell(height - 1, width - 1)
    pool = [GridCell(r, c) for r in range(height) for c in range(width)]
    pool = [c for c in pool if c != start and c != goal]
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        n_obs = int(rng.integers(lo, hi + 1))
        picks = rng.permutation(len(pool))
        obstacles = frozenset(pool[i] for i in picks[:n_obs])
        waypoints = tuple(pool[i] for i in picks[n_obs : n_obs + n_waypoints])
        world = WorldMap(width, height, obstacles, waypoints, start, goal, seed)
        if is_traversable(world):
            return world
    raise ScenarioGenerationError(
        f"no traversable map after {max_attempts} attempts (seed={seed}, "
        f"{width}x{height}, obstacles={n_obstacles}, waypoints={n_waypoints})"
    )


def build_graph(world: WorldMap, known_obstacles: Iterable = ()) -> NavGraph:
    known = {tuple(c) for c in known_obstacles}
    vertices = frozenset(
        GridCell(r, c)
        for r in range(world.height)
        for c in range(world.width)
        if (r, c) not in known
    )
    return NavGraph(world.width, world.height, vertices)


def remove_vertex(graph: NavGraph, cell) -> NavGraph:
    cell = GridCell(*cell)
    if cell not in graph.vertices:
        return graph
    return NavGraph(graph.width, graph.height, graph.vertices - {cell})


def sense(world: WorldMap, state, sensor: SensorModel, already_known: Iterable = ()) -> set:
    """Obstacles whose cell center lies in the closed sensing disc and are not yet known.

    ``state`` is anything with ``x`` and ``y`` attributes. Sensing sees through
    obstacles (no occlusion).
    """
    known = {tuple(c) for c in already_known}
    r2 = sensor.radius * sensor.radius
    found = set()
    for cell in world.obstacles:
        if cell in known:
            continue
        cx, cy = cell.center
        if (cx - state.x) ** 2 + (cy - state.y) ** 2 <= r2:
            found.add(cell)
    return found


_MAP_FIELDS = ("width", "height", "seed", "start", "goal", "waypoints", "obstacles")


def save_map(world: WorldMap) -> str:
    doc = {
        "width": world.width,
        "height": world.height,
        "seed": int(world.seed),
        "start": list(world.start),
        "goal": list(world.goal),
        "waypoints": [list(w) for w in world.waypoints],
        "obstacles": [list(o) for o in sorted(world.obstacles)],
    }
    return json.dumps(doc, indent=1) + "\n"


def _as_cell(value, name: str) -> GridCell:
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        raise MalformedMapError(f"field {name!r}: expected [row, col] integers, got {value!r}")
    return GridCell(*value)


def load_map(text: str) -> WorldMap:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedMapError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise MalformedMapError("map document must be a JSON object")
    for name in _MAP_FIELDS:
        if name not in doc:
            raise MalformedMapError(f"missing field {name!r}")
    for name in ("width", "height", "seed"):
        if not isinstance(doc[name], int) or isinstance(doc[name], bool):
            raise MalformedMapError(f"field {name!r}: expected integer, got {doc[name]!r}")
    for name in ("waypoints", "obstacles"):
        if not isinstance(doc[name], list):
            raise MalformedMapError(f"field {name!r}: expected a list of [row, col]")
    world = WorldMap(
        width=doc["width"],
        height=doc["height"],
        seed=doc["seed"],
        start=_as_cell(doc["start"], "start"),
        goal=_as_cell(doc["goal"], "goal"),
        waypoints=[_as_cell(w, f"waypoints[{i}]") for i, w in enumerate(doc["waypoints"])],
        obstacles=[_as_cell(o, f"obstacles[{i}]") for i, o in enumerate(doc["obstacles"])],
    )
    world.validate()
    return world
