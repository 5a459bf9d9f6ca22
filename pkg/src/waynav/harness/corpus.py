"""Hand-built map families for targeted experiments."""

from __future__ import annotations

from ..world import GridCell, WorldMap

__all__ = ["l_corridor", "l_corridor_maps"]


def l_corridor(east: int, turn: int, left: bool = True, seed: int = 0) -> WorldMap:
    """One-cell-wide L corridor: ``east`` cells east of the start, then ``turn`` cells north
    (``left``) or south. Every cell off the corridor is an obstacle, so the inside
    corner of the bend is blocked.
    """
    if east < 1 or turn < 1:
        raise ValueError("both legs need at least one cell")
    width, height = east + 1, turn + 1
    row0 = 0 if left else turn
    step = 1 if left else -1
    corridor = {GridCell(row0, c) for c in range(width)}
    corridor |= {GridCell(row0 + step * k, east) for k in range(turn + 1)}
    obstacles = frozenset(
        GridCell(r, c) for r in range(height) for c in range(width)
        if GridCell(r, c) not in corridor
    )
    goal = GridCell(row0 + step * turn, east)
    world = WorldMap(width, height, obstacles, (), GridCell(row0, 0), goal, seed)
    world.validate()
    return world


def l_corridor_maps() -> list:
    """Eight L corridors: four leg-length pairs, each bending left and right."""
    legs = [(3, 3), (4, 3), (5, 4), (6, 5)]
    maps = []
    for i, (a, b) in enumerate(legs):
        maps.append(l_corridor(a, b, True, seed=2 * i))
        maps.append(l_corridor(a, b, False, seed=2 * i + 1))
    return maps
