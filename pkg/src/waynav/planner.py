"""Reference paths: BFS on the grid graph, granularization, yaw assignment and repair,
turn detection and the corrective-turn filter."""

from __future__ import annotations

import io
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .world import GridCell, NavGraph, cell_center

__all__ = [
    "NoPathError",
    "PosePath",
    "ResolutionPolicy",
    "TurnCorrectionPolicy",
    "raw_path",
    "detect_turns",
    "granularize",
    "assign_yaw",
    "fix_yaw",
    "wrap_to_pi",
    "corrective_turn_filter",
    "nearest_index",
    "path_to_csv",
]

YAW_EQ_TOL = 1e-9


class NoPathError(RuntimeError):
    pass


@dataclass(frozen=True)
class ResolutionPolicy:
    mode: str = "ADAPTIVE"
    r_straight: int = 1
    r_turn: int = 4
    turn_window: int = 1

    def __post_init__(self):
        if self.mode not in ("FIXED", "ADAPTIVE"):
            raise ValueError(f"unknown resolution mode {self.mode!r}")
        if self.r_straight < 0 or self.r_turn < 0 or self.turn_window < 0:
            raise ValueError("resolutions and turn window must be non-negative")
        if self.mode == "ADAPTIVE" and self.r_turn < self.r_straight:
            raise ValueError("ADAPTIVE mode needs r_turn >= r_straight")


@dataclass(frozen=True)
class TurnCorrectionPolicy:
    enabled: bool = True
    threshold: float = 1.5

    def __post_init__(self):
        if self.enabled and not self.threshold > 0:
            raise ValueError("turn-correction threshold must be positive")


@dataclass(frozen=True)
class PosePath:
    """Reference path as an ``(n, 3)`` array of ``(x, y, yaw_ref)`` rows."""

    points: np.ndarray
    turn_indices: tuple = field(default=())

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "turn_indices", tuple(int(i) for i in self.turn_indices))

    def __len__(self):
        return len(self.points)

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]

    def __eq__(self, other):
        if not isinstance(other, PosePath):
            return NotImplemented
        return self.turn_indices == other.turn_indices and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash((self.points.tobytes(), self.turn_indices))


def raw_path(graph: NavGraph, start, goal) -> list:
    """Fewest-edges path by BFS, expanding neighbours East, North, West, South."""
    start, goal = GridCell(*start), GridCell(*goal)
    for c in (start, goal):
        if c not in graph.vertices:
            raise NoPathError(f"cell {tuple(c)} is not a graph vertex")
    parent = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == goal:
            break
        for nb in graph.neighbors(cell):
            if nb not in parent:
                parent[nb] = cell
                queue.append(nb)
    if goal not in parent:
        raise NoPathError(f"no path from {tuple(start)} to {tuple(goal)}")
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def detect_turns(cells) -> list:
    """Indices of cells where the incoming and outgoing grid directions differ."""
    turns = []
    for i in range(1, len(cells) - 1):
        d_in = (cells[i][0] - cells[i - 1][0], cells[i][1] - cells[i - 1][1])
        d_out = (cells[i + 1][0] - cells[i][0], cells[i + 1][1] - cells[i][1])
        if d_in != d_out:
            turns.append(i)
    return turns


def assign_yaw(points) -> PosePath:
    """Heading toward the next point; the last point repeats the previous heading."""
    xy = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(xy)
    if n == 0:
        raise ValueError("assign_yaw needs at least one point")
    yaw = np.zeros(n)
    if n > 1:
        d = np.diff(xy, axis=0)
        yaw[:-1] = np.arctan2(d[:, 1], d[:, 0])
        yaw[-1] = yaw[-2]
    return PosePath(np.column_stack([xy, yaw]))


def granularize(cells, policy: ResolutionPolicy = ResolutionPolicy()) -> PosePath:
    """Cell centers plus ``r`` evenly spaced interior points per segment.

    In ADAPTIVE mode the ``turn_window`` segments on each side of a turn cell get
    ``r_turn`` points; every other segment gets ``r_straight``.
    """
    if len(cells) == 0:
        raise ValueError("cannot granularize an empty path")
    centers = np.array([cell_center(c) for c in cells], dtype=float)
    turns = detect_turns(cells)
    n_seg = len(cells) - 1
    res = np.full(n_seg, policy.r_straight, dtype=int)
    if policy.mode == "ADAPTIVE":
        for t in turns:
            lo = max(0, t - policy.turn_window)
            hi = min(n_seg, t + policy.turn_window)
            res[lo:hi] = policy.r_turn
    pts = [centers[0]]
    turn_pts = []
    for j in range(n_seg):
        a, b = centers[j], centers[j + 1]
        r = int(res[j])
        for k in range(1, r + 1):
            s = k / (r + 1)
            pts.append((1.0 - s) * a + s * b)
        pts.append(b)
        if j + 1 in turns:
            turn_pts.append(len(pts) - 1)
    path = assign_yaw(np.array(pts))
    return PosePath(path.points, turn_pts)


def wrap_to_pi(a):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def fix_yaw(yaw_cur: float, yaw_ref: float) -> tuple:
    """Shift current/reference yaw by 2*pi so their gap is the short way round.

    Handles a reference sitting on the +-pi discontinuity first, then opposite-sign
    pairs more than pi apart.
    """
    if abs(yaw_ref - math.pi) <= YAW_EQ_TOL and yaw_cur < 0:
        yaw_cur += 2.0 * math.pi
    elif abs(yaw_ref + math.pi) <= YAW_EQ_TOL and yaw_cur > 0:
        yaw_cur -= 2.0 * math.pi
    if yaw_cur * yaw_ref < 0 and abs(yaw_cur - yaw_ref) > math.pi:
        if yaw_cur < 0:
            yaw_ref -= 2.0 * math.pi
        else:
            yaw_ref += 2.0 * math.pi
    return yaw_cur, yaw_ref


def nearest_index(xy: np.ndarray, x: float, y: float) -> int:
    """Index of the path point closest to ``(x, y)``; earliest on ties."""
    d2 = (xy[:, 0] - x) ** 2 + (xy[:, 1] - y) ** 2
    return int(np.argmin(d2))


def corrective_turn_filter(path: PosePath, state, policy: TurnCorrectionPolicy) -> PosePath:
    """Cut the path just after the next turn while the robot is still far from it.

    The upcoming turn is the first turn index at or after the path point nearest
    the robot. If the robot is farther than ``threshold`` from it, the returned
    path ends at that turn point.
    """
    if len(path) == 0:
        raise ValueError("empty path")
    if not policy.enabled or not path.turn_indices:
        return path
    k = nearest_index(path.xy, state.x, state.y)
    upcoming = [t for t in path.turn_indices if t >= k]
    if not upcoming:
        return path
    t = upcoming[0]
    tx, ty = path.points[t, 0], path.points[t, 1]
    if math.hypot(tx - state.x, ty - state.y) > policy.threshold:
        return PosePath(path.points[: t + 1], [i for i in path.turn_indices if i <= t])
    return path


def path_to_csv(path: PosePath) -> str:
    buf = io.StringIO()
    buf.write("idx,x,y,yaw_ref,is_turn\n")
    turns = set(path.turn_indices)
    for i, (x, y, yaw) in enumerate(path.points):
        buf.write(f"{i},{float(x)!r},{float(y)!r},{float(yaw)!r},{int(i in turns)}\n")
    return buf.getvalue()
