"""JSON configuration for experiments and single episodes.

A config document has optional top-level sections ``world``, ``sensor``,
``mpc``, ``planning``, ``flags``, ``arrival`` and ``experiment``. Field names
match the dataclasses they populate; unknown names are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from ..controller import ConfigurationError, MpcConfig, SolverOptions, WeightProfile
from ..simulator import ArrivalPolicy, FeatureFlags, PlanningConfig
from ..world import SensorModel

__all__ = [
    "ConfigError",
    "WorldSpec",
    "ExperimentConfig",
    "StackConfig",
    "HarnessConfig",
    "load_config",
    "parse_config",
    "config_to_dict",
]


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass(frozen=True)
class WorldSpec:
    width: int = 10
    height: int = 10
    obstacle_range: tuple = (25, 35)
    n_waypoints: int = 8  # total, goal included

    def __post_init__(self):
        object.__setattr__(self, "obstacle_range", tuple(int(v) for v in self.obstacle_range))
        if self.width < 2 or self.height < 2:
            raise ConfigError("grid must be at least 2x2")
        if len(self.obstacle_range) != 2 or not 0 <= self.obstacle_range[0] <= self.obstacle_range[1]:
            raise ConfigError(f"bad obstacle_range {self.obstacle_range}")
        if self.n_waypoints < 1:
            raise ConfigError("n_waypoints counts the goal, so it must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run. Waypoint counts include the goal."""

    experiment: str = "ABLATION"
    map_seeds: tuple = tuple(range(10))
    width: int = 10
    height: int = 10
    obstacle_range: tuple = (25, 35)
    waypoint_counts: tuple = (8,)
    gammas: tuple = (0.5,)
    repeats: int = 10
    output_dir: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "experiment", str(self.experiment).upper())
        for name in ("map_seeds", "waypoint_counts", "obstacle_range"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if self.experiment not in ("ABLATION", "SEQUENCER"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.map_seeds:
            raise ConfigError("map_seeds must not be empty")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not self.waypoint_counts or min(self.waypoint_counts) < 1:
            raise ConfigError("waypoint_counts must be non-empty and >= 1")
        if any(not 0 < g <= 1 for g in self.gammas):
            raise ConfigError("gammas must lie in (0, 1]")

    def world_spec(self, n_waypoints: Optional[int] = None) -> WorldSpec:
        n = self.waypoint_counts[0] if n_waypoints is None else n_waypoints
        return WorldSpec(self.width, self.height, self.obstacle_range, n)


@dataclass(frozen=True)
class StackConfig:
    """Everything one closed-loop episode needs besides the map."""

    mpc: MpcConfig = field(default_factory=MpcConfig)
    planning: PlanningConfig = field(default_factory=PlanningConfig)
    sensor: SensorModel = field(default_factory=SensorModel)
    arrival: ArrivalPolicy = field(default_factory=ArrivalPolicy)
    flags: FeatureFlags = field(default_factory=FeatureFlags)
    timeout: float = 300.0
    robot_radius: float = 0.25
    record_timing: bool = True


@dataclass(frozen=True)
class HarnessConfig:
    world: WorldSpec = field(default_factory=WorldSpec)
    stack: StackConfig = field(default_factory=StackConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _build_mpc(data) -> MpcConfig:
    if not isinstance(data, dict):
        raise ConfigError("mpc must be an object")
    data = dict(data)
    base = MpcConfig()
    if "profiles" in data:
        profiles = dict(base.profiles)
        raw = data["profiles"]
        if not isinstance(raw, dict):
            raise ConfigError("mpc.profiles must be an object")
        for label, spec in raw.items():
            if label not in ("STRAIGHT", "TURN"):
                raise ConfigError(f"unknown weight profile {label!r}")
            spec = dict(spec)
            spec.setdefault("label", label)
            profiles[label] = _build(WeightProfile, spec, f"mpc.profiles.{label}")
        data["profiles"] = profiles
    if "solver" in data:
        data["solver"] = _build(SolverOptions, data["solver"], "mpc.solver")
    try:
        return _build(MpcConfig, data, "mpc")
    except ConfigurationError as exc:
        raise ConfigError(str(exc)) from exc


_SECTIONS = ("world", "sensor", "mpc", "planning", "flags", "arrival", "episode", "experiment")


def parse_config(doc: dict) -> HarnessConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    world = _build(WorldSpec, doc.get("world", {}), "world")
    episode = doc.get("episode", {})
    if not isinstance(episode, dict):
        raise ConfigError("episode must be an object")
    bad = sorted(set(episode) - {"timeout", "robot_radius", "record_timing"})
    if bad:
        raise ConfigError(f"unknown field(s) in episode: {', '.join(bad)}")
    stack = StackConfig(
        mpc=_build_mpc(doc.get("mpc", {})),
        planning=_build(PlanningConfig, doc.get("planning", {}), "planning"),
        sensor=_build(SensorModel, doc.get("sensor", {}), "sensor"),
        arrival=_build(ArrivalPolicy, doc.get("arrival", {}), "arrival"),
        flags=_build(FeatureFlags, doc.get("flags", {}), "flags"),
        **episode,
    )
    exp = dict(doc.get("experiment", {}))
    # grid settings default to the world section so they need stating only once
    for key in ("width", "height", "obstacle_range"):
        exp.setdefault(key, getattr(world, key))
    exp.setdefault("waypoint_counts", [world.n_waypoints])
    experiment = _build(ExperimentConfig, exp, "experiment")
    return HarnessConfig(world, stack, experiment)


def load_config(path) -> HarnessConfig:
    """Read and validate a JSON config file; any problem raises ConfigError."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return parse_config(doc)


def config_to_dict(cfg: HarnessConfig) -> dict:
    """Inverse of :func:`parse_config` (round-trips through JSON)."""
    mpc = cfg.stack.mpc
    mpc_doc = {f.name: getattr(mpc, f.name) for f in fields(mpc)}
    mpc_doc["profiles"] = {
        k: {"q": list(p.q), "r": list(p.r)} for k, p in sorted(mpc.profiles.items())
    }
    mpc_doc["solver"] = {f.name: getattr(mpc.solver, f.name) for f in fields(mpc.solver)}

    def plain(obj):
        out = {}
        for f in fields(obj):
            v = getattr(obj, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    s = cfg.stack
    return {
        "world": plain(cfg.world),
        "sensor": plain(s.sensor),
        "mpc": mpc_doc,
        "planning": plain(s.planning),
        "flags": plain(s.flags),
        "arrival": plain(s.arrival),
        "episode": {"timeout": s.timeout, "robot_radius": s.robot_radius,
                    "record_timing": s.record_timing},
        "experiment": plain(cfg.experiment),
    }


def with_overrides(cfg: HarnessConfig, **stack_fields) -> HarnessConfig:
    return replace(cfg, stack=replace(cfg.stack, **stack_fields))
