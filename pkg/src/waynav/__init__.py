"""Multi-waypoint grid navigation: sequencing, path planning and multiple-shooting MPC."""

from .controller import (
    ControlAction,
    MpcConfig,
    MpcController,
    MpcProblem,
    MpcSolution,
    RobotState,
    WeightProfile,
    rk4_step,
    solve_mpc,
)
from .planner import PosePath, ResolutionPolicy, TurnCorrectionPolicy, granularize, raw_path
from .sequencer import bcp_next, greedy_next, probabilistic_next
from .simulator import ArrivalPolicy, EpisodeLog, FeatureFlags, PlanningConfig, run_episode
from .world import GridCell, SensorModel, WorldMap, generate_scenario, load_map, save_map

__version__ = "0.1.0"

__all__ = [
    "ControlAction", "MpcConfig", "MpcController", "MpcProblem", "MpcSolution", "RobotState",
    "WeightProfile", "rk4_step", "solve_mpc", "PosePath", "ResolutionPolicy",
    "TurnCorrectionPolicy", "granularize", "raw_path", "bcp_next", "greedy_next",
    "probabilistic_next", "ArrivalPolicy", "EpisodeLog", "FeatureFlags", "PlanningConfig",
    "run_episode", "GridCell", "SensorModel", "WorldMap", "generate_scenario", "load_map",
    "save_map",
]
