"""Experiment drivers: the 8-way feature ablation and the sequencer study."""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..sequencer import (
    COST_TOL,
    MAX_FREE,
    SEQUENCER_CSV_COLUMNS,
    EnumerationBudgetError,
    accuracy_trial,
    all_tour_costs,
    retained_count,
)
from ..simulator import FeatureFlags, run_episode
from ..world import WorldMap, generate_scenario
from .config import ConfigError, ExperimentConfig, StackConfig
from .metrics import episode_metrics

__all__ = [
    "ABLATION_COLUMNS",
    "SUMMARY_COLUMNS",
    "RETAINED_COLUMNS",
    "ablation_flags",
    "scenario_maps",
    "run_ablation",
    "run_sequencer_study",
    "retained_optimal_count",
    "write_csv",
]

ABLATION_COLUMNS = (
    "adaptive_resolution", "turn_correction", "adaptive_weights",
    "cte_rms", "j_lin", "j_ang", "traversal_s", "compute_hz", "success_rate",
)
SUMMARY_COLUMNS = (
    "n_waypoints", "m", "method", "gamma", "accuracy", "mean_elapsed_s",
    "mean_perms_evaluated", "status",
)
RETAINED_COLUMNS = ("n_waypoints", "map_seed", "gamma", "retained", "mean_optimal_retained",
                    "total_optimal")


def ablation_flags(sequencer_method: str = "GREEDY", gamma=None) -> list:
    """All 8 on/off combinations, all-off first, in Table order (bit 0 = weights)."""
    combos = [(False, False, False), (False, False, True), (False, True, False),
              (True, False, False), (False, True, True), (True, False, True),
              (True, True, False), (True, True, True)]
    return [FeatureFlags(ar, tc, aw, sequencer_method, gamma) for ar, tc, aw in combos]


def scenario_maps(config: ExperimentConfig, n_waypoints: Optional[int] = None) -> list:
    """Seeded maps; ``n_waypoints`` counts the goal, so intermediates = n - 1."""
    n = config.waypoint_counts[0] if n_waypoints is None else n_waypoints
    return [
        generate_scenario(seed, config.width, config.height, config.obstacle_range, n - 1)
        for seed in config.map_seeds
    ]


def write_csv(path, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k, "")) for k in columns})


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def _episode_task(args):
    world, flags, stack, seed = args
    try:
        log = run_episode(
            world, flags, stack.mpc, stack.sensor, stack.arrival, stack.timeout, seed,
            stack.planning, stack.robot_radius, stack.record_timing,
        )
    except Exception as exc:  # one bad episode must not sink the grid
        return None, f"{type(exc).__name__}: {exc}"
    return log, None


def _flag_key(f: FeatureFlags) -> tuple:
    return (f.adaptive_resolution, f.turn_correction, f.adaptive_weights)


def _episode_name(flags: FeatureFlags, map_seed) -> str:
    ar, tc, aw = (int(b) for b in _flag_key(flags))
    return f"ar{ar}_tc{tc}_aw{aw}_map{map_seed}"


def run_ablation(
    config: ExperimentConfig,
    stack: StackConfig = StackConfig(),
    maps: Optional[Sequence[WorldMap]] = None,
    flag_sets: Optional[Sequence[FeatureFlags]] = None,
    jobs: int = 1,
    keep_logs: bool = False,
) -> dict:
    """Run every flag combination on every map and average the metrics per combination.

    Returns ``{"rows": [...], "episodes": [...]}``; each episode record has the
    flags, map seed, outcome, metrics and (if ``keep_logs``) the EpisodeLog.
    When ``config.output_dir`` is set, ``ablation.csv`` and per-episode log
    files under ``episodes/`` are written there.
    """
    if maps is None:
        maps = scenario_maps(config)
    maps = list(maps)
    if not maps:
        raise ConfigError("ablation needs at least one map")
    if flag_sets is None:
        base = stack.flags
        flag_sets = ablation_flags(base.sequencer_method, base.gamma)
    tasks = [(w, f, stack, config.seed) for f in flag_sets for w in maps]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_episode_task, tasks))
    else:
        results = [_episode_task(t) for t in tasks]

    out_dir = Path(config.output_dir) if config.output_dir else None
    episodes = []
    for (world, flags, _, _), (log, error) in zip(tasks, results):
        rec = {"flags": flags, "map_seed": world.seed, "error": error}
        if log is None:
            rec.update(outcome="ERROR", metrics=None)
        else:
            rec.update(outcome=log.outcome, metrics=episode_metrics(log))
            if keep_logs:
                rec["log"] = log
            if out_dir is not None:
                stem = out_dir / "episodes" / _episode_name(flags, world.seed)
                stem.parent.mkdir(parents=True, exist_ok=True)
                stem.with_suffix(".csv").write_text(log.to_csv())
                stem.with_suffix(".json").write_text(log.sidecar())
        episodes.append(rec)

    rows = []
    for flags in sorted({_flag_key(f): f for f in flag_sets}.values(), key=_flag_key):
        recs = [e for e in episodes if _flag_key(e["flags"]) == _flag_key(flags)]
        mets = [e["metrics"] for e in recs if e["metrics"] is not None]
        trav = [m.traversal_time for m in mets if m.traversal_time is not None]

        def mean(vals):
            vals = [v for v in vals if not math.isnan(v)]
            return float(np.mean(vals)) if vals else math.nan

        rows.append({
            "adaptive_resolution": flags.adaptive_resolution,
            "turn_correction": flags.turn_correction,
            "adaptive_weights": flags.adaptive_weights,
            "cte_rms": mean([m.cte_rms for m in mets]),
            "j_lin": mean([m.j_lin for m in mets]),
            "j_ang": mean([m.j_ang for m in mets]),
            "traversal_s": mean(trav),
            "compute_hz": mean([m.mean_compute_hz for m in mets]),
            "success_rate": sum(e["outcome"] == "SUCCESS" for e in recs) / len(recs),
            "outcomes": "".join(e["outcome"][0] for e in recs),
        })
    if out_dir is not None:
        write_csv(out_dir / "ablation.csv", ABLATION_COLUMNS, rows)
    return {"rows": rows, "episodes": episodes}


def retained_optimal_count(world: WorldMap, gamma: float, repeats: int, seed: int = 0,
                           max_free: int = MAX_FREE) -> tuple:
    """Mean number of optimal-cost orderings among the retained ones, and the exact total.

    Draws are seeded per repeat only, so for a fixed repeat the retained set at
    a smaller gamma is a prefix of the set at a larger one.
    """
    costs = all_tour_costs(world.start.center, [w.center for w in world.waypoints],
                           world.goal.center, max_free)
    optimal = costs <= costs.min() + COST_TOL
    total = len(costs)
    keep = retained_count(gamma, total)
    counts = []
    for rep in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence([seed, world.seed, rep]))
        counts.append(int(optimal[rng.permutation(total)[:keep]].sum()))
    return float(np.mean(counts)), int(optimal.sum())


def run_sequencer_study(config: ExperimentConfig, max_free: int = MAX_FREE,
                        plots: bool = True) -> dict:
    """Accuracy, timing and evaluated-permutation counts per waypoint count and method.

    Returns ``{"summary": [...], "trials": [...], "retained": [...]}``. Rows whose
    instances exceed the enumeration cap are marked ``skipped``. With an output
    directory, writes ``sequencer.csv`` (per trial), ``sequencer_summary.csv``,
    ``retained_optimal.csv`` and SVG plots.
    """
    summary, trials, retained = [], [], []
    for n in config.waypoint_counts:
        maps = scenario_maps(config, n)
        runs = [("BCP", 1.0), ("GREEDY", 1.0)] + [("PROBABILISTIC", g) for g in config.gammas]
        for method, gamma in runs:
            rows = []
            try:
                res = accuracy_trial(maps, method, gamma, config.repeats, config.seed,
                                     max_free, rows)
            except EnumerationBudgetError:
                summary.append({"n_waypoints": n, "m": n - 1, "method": method,
                                "gamma": gamma if method == "PROBABILISTIC" else "",
                                "accuracy": math.nan, "mean_elapsed_s": math.nan,
                                "mean_perms_evaluated": math.nan, "status": "skipped"})
                continue
            for r in rows:
                r["n_waypoints"] = n
            trials.extend(rows)
            summary.append({
                "n_waypoints": n, "m": n - 1, "method": method,
                "gamma": gamma if method == "PROBABILISTIC" else "",
                "accuracy": res["accuracy"], "mean_elapsed_s": res["mean_elapsed"],
                "mean_perms_evaluated": res["mean_perms_evaluated"], "status": "ok",
            })
        for world, gamma in itertools.product(maps, config.gammas):
            try:
                mean_opt, total = retained_optimal_count(world, gamma, config.repeats,
                                                         config.seed, max_free)
            except EnumerationBudgetError:
                continue
            retained.append({
                "n_waypoints": n, "map_seed": world.seed, "gamma": gamma,
                "retained": retained_count(gamma, math.factorial(len(world.waypoints))),
                "mean_optimal_retained": mean_opt, "total_optimal": total,
            })
    if config.output_dir:
        out = Path(config.output_dir)
        write_csv(out / "sequencer.csv", ("n_waypoints",) + SEQUENCER_CSV_COLUMNS, trials)
        write_csv(out / "sequencer_summary.csv", SUMMARY_COLUMNS, summary)
        write_csv(out / "retained_optimal.csv", RETAINED_COLUMNS, retained)
        if plots:
            from .plots import plot_sequencer_study

            plot_sequencer_study(summary, retained, out)
    return {"summary": summary, "trials": trials, "retained": retained}


def with_flags(stack: StackConfig, flags: FeatureFlags) -> StackConfig:
    return replace(stack, flags=flags)
