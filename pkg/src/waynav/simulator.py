"""Closed-loop episode runner.

One tick of period ``h``: sense, update the graph, (re)sequence and (re)plan,
build references, solve the MPC, apply the first control to a kinematic plant
integrated with the same RK4 as the model, then check for collision.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .controller import (
    ControlAction,
    MpcConfig,
    MpcController,
    RobotState,
    rk4_step,
    to_wheel_command,
)
from .planner import (
    NoPathError,
    PosePath,
    ResolutionPolicy,
    TurnCorrectionPolicy,
    corrective_turn_filter,
    granularize,
    raw_path,
)
from .sequencer import bcp_next, greedy_next, probabilistic_next
from .world import (
    GridCell,
    SensorModel,
    WorldMap,
    build_graph,
    cell_of,
    remove_vertex,
    sense,
)

__all__ = [
    "FeatureFlags",
    "ArrivalPolicy",
    "PlanningConfig",
    "Sample",
    "Event",
    "EpisodeLog",
    "run_episode",
    "check_collision",
    "LOG_CSV_COLUMNS",
]

LOG_CSV_COLUMNS = (
    "t", "x", "y", "yaw", "v", "omega", "vL", "vR", "ref_x", "ref_y", "ref_yaw",
    "iterations", "converged", "cost", "defect", "profile", "compute_s",
)


@dataclass(frozen=True)
class FeatureFlags:
    adaptive_resolution: bool = True
    turn_correction: bool = True
    adaptive_weights: bool = True
    sequencer_method: str = "GREEDY"
    gamma: Optional[float] = None

    def __post_init__(self):
        method = self.sequencer_method.upper()
        object.__setattr__(self, "sequencer_method", method)
        if method not in ("GREEDY", "BCP", "PROBABILISTIC"):
            raise ValueError(f"unknown sequencer method {self.sequencer_method!r}")
        if (self.gamma is not None) != (method == "PROBABILISTIC"):
            raise ValueError("gamma must be given iff the sequencer is PROBABILISTIC")
        if self.gamma is not None and not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


@dataclass(frozen=True)
class ArrivalPolicy:
    position_tolerance: float = 0.3

    def __post_init__(self):
        if not self.position_tolerance > 0:
            raise ValueError("position_tolerance must be positive")


@dataclass(frozen=True)
class PlanningConfig:
    """Path-shaping parameters.

    ``fixed_resolution`` is used on every segment when adaptive resolution is
    off; the adaptive policy uses ``r_straight``/``r_turn``.
    """

    r_straight: int = 6
    r_turn: int = 14
    turn_window: int = 1
    fixed_resolution: int = 9
    turn_threshold: float = 0.8

    def resolution(self, adaptive: bool) -> ResolutionPolicy:
        if adaptive:
            return ResolutionPolicy("ADAPTIVE", self.r_straight, self.r_turn, self.turn_window)
        return ResolutionPolicy("FIXED", self.fixed_resolution, self.fixed_resolution, 0)


@dataclass
class Sample:
    t: float
    state: RobotState
    control: ControlAction
    wheel: tuple
    ref: tuple
    iterations: int
    converged: bool
    cost: float
    defect: float
    profile: str
    compute_s: float
    path_index: int


@dataclass
class Event:
    t: float
    kind: str
    detail: str = ""


@dataclass
class EpisodeLog:
    h: float
    samples: list = field(default_factory=list)
    events: list = field(default_factory=list)
    paths: list = field(default_factory=list)
    outcome: str = "TIMEOUT"
    final_state: Optional[RobotState] = None

    def event_times(self, kind: str) -> list:
        return [e.t for e in self.events if e.kind == kind]

    def column(self, name: str) -> np.ndarray:
        getters = {
            "t": lambda s: s.t, "x": lambda s: s.state.x, "y": lambda s: s.state.y,
            "yaw": lambda s: s.state.yaw, "v": lambda s: s.control.v,
            "omega": lambda s: s.control.omega, "compute_s": lambda s: s.compute_s,
        }
        return np.array([getters[name](s) for s in self.samples], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_CSV_COLUMNS)
        for s in self.samples:
            w.writerow([
                repr(s.t), repr(s.state.x), repr(s.state.y), repr(s.state.yaw),
                repr(s.control.v), repr(s.control.omega), repr(s.wheel[0]), repr(s.wheel[1]),
                repr(s.ref[0]), repr(s.ref[1]), repr(s.ref[2]), s.iterations,
                int(s.converged), repr(s.cost), repr(s.defect), s.profile, repr(s.compute_s),
            ])
        return buf.getvalue()

    def sidecar(self) -> str:
        doc = {
            "h": self.h,
            "outcome": self.outcome,
            "events": [asdict(e) for e in self.events],
            "paths": [p.points.tolist() for p in self.paths],
            "path_turns": [list(p.turn_indices) for p in self.paths],
            "path_index": [s.path_index for s in self.samples],
            "final_state": list(self.final_state) if self.final_state is not None else None,
        }
        return json.dumps(doc)

    @classmethod
    def from_files(cls, csv_text: str, sidecar_text: str) -> "EpisodeLog":
        meta = json.loads(sidecar_text)
        log = cls(h=float(meta["h"]), outcome=meta["outcome"])
        log.events = [Event(**e) for e in meta["events"]]
        log.paths = [PosePath(p, t) for p, t in zip(meta["paths"], meta["path_turns"])]
        if meta.get("final_state") is not None:
            log.final_state = RobotState(*meta["final_state"])
        rows = list(csv.DictReader(io.StringIO(csv_text)))
        missing = set(LOG_CSV_COLUMNS) - set(rows[0].keys() if rows else LOG_CSV_COLUMNS)
        if missing:
            raise ValueError(f"episode log is missing columns {sorted(missing)}")
        for row, pidx in zip(rows, meta["path_index"]):
            log.samples.append(Sample(
                t=float(row["t"]),
                state=RobotState(float(row["x"]), float(row["y"]), float(row["yaw"])),
                control=ControlAction(float(row["v"]), float(row["omega"])),
                wheel=(float(row["vL"]), float(row["vR"])),
                ref=(float(row["ref_x"]), float(row["ref_y"]), float(row["ref_yaw"])),
                iterations=int(row["iterations"]), converged=bool(int(row["converged"])),
                cost=float(row["cost"]), defect=float(row["defect"]), profile=row["profile"],
                compute_s=float(row["compute_s"]), path_index=int(pidx),
            ))
        return log


def check_collision(state, obstacles, robot_radius: float = 0.25) -> bool:
    """Robot disc against closed unit obstacle squares."""
    x, y = state[0], state[1]
    for r, c in obstacles:
        dx = max(c - x, 0.0, x - (c + 1.0))
        dy = max(r - y, 0.0, y - (r + 1.0))
        if dx * dx + dy * dy < robot_radius * robot_radius:
            return True
    return False


class _Episode:
    """Mutable per-episode state; not shared."""

    def __init__(self, world, flags, mpc, sensor, arrival, planning, seed):
        self.world = world
        self.flags = flags
        self.mpc = mpc
        self.sensor = sensor
        self.arrival = arrival
        self.planning = planning
        self.resolution = planning.resolution(flags.adaptive_resolution)
        self.turn_policy = TurnCorrectionPolicy(flags.turn_correction, planning.turn_threshold)
        self.seeds = np.random.SeedSequence(seed)
        self.known = set()
        self.graph = build_graph(world, ())
        self.pending = list(world.waypoints)
        self.goal_pending = True
        self.target: Optional[GridCell] = None
        self.path: Optional[PosePath] = None
        self.cells: list = []
        self.path_index = -1
        self.bounds = ((0.0, 0.0), (float(world.width), float(world.height)))

    def current_cell(self, state) -> GridCell:
        return cell_of(state.x, state.y, self.world.width, self.world.height)

    def choose_target(self, state, exclude=()):
        cur = self.current_cell(state).center
        pending = [w for w in self.pending if w not in exclude]
        goal = self.world.goal
        if not pending:
            return goal if self.goal_pending and goal not in exclude else None
        pts = [w.center for w in pending] + [goal.center]
        method = self.flags.sequencer_method
        if method == "GREEDY":
            res = greedy_next(cur, pts, goal.center)
        elif method == "BCP":
            res = bcp_next(cur, pts, goal.center)
        else:
            child = int(self.seeds.spawn(1)[0].generate_state(1)[0])
            res = probabilistic_next(cur, pts, goal.center, self.flags.gamma, child)
        for w in pending + [goal]:
            if w.center == res.chosen:
                return w
        raise AssertionError("sequencer returned an unknown waypoint")

    def plan(self, state, log: EpisodeLog) -> bool:
        """Path to the current target; falls back to other reachable waypoints."""
        tried = set()
        while self.target is not None:
            try:
                cells = raw_path(self.graph, self.current_cell(state), self.target)
            except NoPathError:
                tried.add(self.target)
                self.target = self.choose_target(state, exclude=tried)
                continue
            self.cells = cells
            self.path = granularize(cells, self.resolution)
            log.paths.append(self.path)
            self.path_index = len(log.paths) - 1
            return True
        self.path = None
        return False


def run_episode(
    world: WorldMap,
    flags: FeatureFlags = FeatureFlags(),
    mpc: MpcConfig = MpcConfig(),
    sensor: SensorModel = SensorModel(),
    arrival: ArrivalPolicy = ArrivalPolicy(),
    timeout: float = 300.0,
    seed: int = 0,
    planning: PlanningConfig = PlanningConfig(),
    robot_radius: float = 0.25,
    record_timing: bool = True,
    initial_yaw: float = 0.0,
) -> EpisodeLog:
    """Drive from start through every waypoint to the goal; deterministic for fixed inputs.

    With ``record_timing=False`` every compute time is logged as 0 so the log is
    byte-reproducible.
    """
    h = mpc.h
    ep = _Episode(world, flags, mpc, sensor, arrival, planning, seed)
    ctrl = MpcController(mpc, adaptive_weights=flags.adaptive_weights)
    log = EpisodeLog(h=h)
    sx, sy = world.start.center
    state = RobotState(sx, sy, initial_yaw)
    n_steps = int(math.floor(timeout / h + 1e-9))
    tol = arrival.position_tolerance

    for k in range(n_steps + 1):
        t = round(k * h, 10)
        tick0 = time.perf_counter()

        found = sense(world, state, sensor, ep.known)
        for cell in sorted(found):
            ep.known.add(cell)
            ep.graph = remove_vertex(ep.graph, cell)
            log.events.append(Event(t, "OBSTACLE_DETECTED", f"{cell[0]},{cell[1]}"))
        # a detection only forces a new plan if it lands on the current route
        replan = any(c in ep.cells for c in found)
        if k == 0:
            ep.target = ep.choose_target(state)
            replan = True

        if ep.target is not None and math.hypot(
            state.x - ep.target.center[0], state.y - ep.target.center[1]
        ) <= tol and (ep.target != world.goal or not ep.pending):
            if ep.target == world.goal:
                log.events.append(Event(t, "GOAL_REACHED"))
                log.outcome = "SUCCESS"
                # terminal sample holds the last command so the log ends at the goal time
                prev = log.samples[-1] if log.samples else None
                u = prev.control if prev else ControlAction(0.0, 0.0)
                compute = time.perf_counter() - tick0 if record_timing else 0.0
                log.samples.append(Sample(
                    t, state, u, tuple(map(float, to_wheel_command(u, mpc))),
                    prev.ref if prev else (state.x, state.y, state.yaw), 0, True, 0.0, 0.0,
                    prev.profile if prev else "", compute, ep.path_index,
                ))
                break
            log.events.append(Event(t, "WAYPOINT_REACHED", f"{ep.target[0]},{ep.target[1]}"))
            ep.pending.remove(ep.target)
            ep.target = ep.choose_target(state)
            ctrl.reset()
            replan = True

        if k >= n_steps:
            break

        if replan or ep.path is None:
            had_path = ep.path is not None
            ok = ep.plan(state, log)
            if ok and (found or had_path):
                log.events.append(Event(t, "REPLANNED"))

        if ep.path is None:
            u = ControlAction(0.0, 0.0)
            ref = (state.x, state.y, state.yaw)
            diag = (0, False, 0.0, 0.0, "")
        else:
            active = ep.path
            if flags.turn_correction:
                active = corrective_turn_filter(ep.path, state, ep.turn_policy)
            sol, refs = ctrl.step(state, active, ep.bounds)
            u = sol.first_control
            ref = tuple(map(float, refs[0]))
            diag = (sol.iterations, sol.converged, float(sol.cost), float(sol.defect_norm),
                    sol.profile)
        compute = time.perf_counter() - tick0 if record_timing else 0.0
        wheel = tuple(map(float, to_wheel_command(u, mpc)))
        log.samples.append(Sample(t, state, u, wheel, ref, *diag, compute, ep.path_index))

        state = rk4_step(state, u, h)
        if check_collision(state, world.obstacles, robot_radius):
            log.events.append(Event(round((k + 1) * h, 10), "COLLISION"))
            log.outcome = "COLLISION"
            break
    if log.outcome not in ("SUCCESS", "COLLISION"):
        log.outcome = "TIMEOUT"
        log.events.append(Event(round(n_steps * h, 10), "TIMEOUT"))
    log.final_state = state
    return log
