"""Metrics, experiment drivers, configuration, plots and the CLI."""

from .config import ConfigError, ExperimentConfig, HarnessConfig, StackConfig, WorldSpec, load_config, parse_config
from .experiments import ablation_flags, retained_optimal_count, run_ablation, run_sequencer_study, scenario_maps
from .metrics import (
    MetricsReport,
    TooFewSamplesError,
    compute_frequency,
    cross_track_error,
    episode_metrics,
    jerk_from_series,
    jerk_metrics,
    traversal_time,
)

__all__ = [
    "ConfigError", "ExperimentConfig", "HarnessConfig", "StackConfig", "WorldSpec",
    "load_config", "parse_config", "ablation_flags", "retained_optimal_count", "run_ablation",
    "run_sequencer_study", "scenario_maps", "MetricsReport", "TooFewSamplesError",
    "compute_frequency", "cross_track_error", "episode_metrics", "jerk_from_series",
    "jerk_metrics", "traversal_time",
]
