"""Command-line entry point.

Exit status: 0 success, 1 configuration or usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from ..simulator import EpisodeLog, run_episode
from ..world import MalformedMapError, MapInvariantError, ScenarioGenerationError, generate_scenario, load_map, save_map
from .config import ConfigError, HarnessConfig, load_config
from .experiments import run_ablation, run_sequencer_study
from .metrics import TooFewSamplesError, episode_metrics

__all__ = ["main", "build_parser"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="map / run seed")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="parallel episodes")

    parser = _Parser(prog="waynav", parents=[common],
                     description="Multi-waypoint grid navigation with MPC tracking.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("gen-map", parents=[common], help="write one seeded map document")

    p = sub.add_parser("run-episode", parents=[common], help="run one closed-loop episode")
    p.add_argument("--map", help="map document (default: generate from --seed)")
    p.add_argument("--no-timing", action="store_true",
                   help="log zero compute times so the output is reproducible")

    sub.add_parser("ablation", parents=[common], help="8-way feature ablation table")
    sub.add_parser("sequencer-study", parents=[common], help="sequencer accuracy study")

    p = sub.add_parser("metrics", parents=[common], help="recompute metrics from a saved log")
    p.add_argument("--log", required=True, help="episode CSV (sidecar JSON next to it)")

    p = sub.add_parser("plot", parents=[common], help="SVG trajectory over the reference")
    p.add_argument("--log", required=True, nargs="+", help="episode CSV(s) to overlay")
    p.add_argument("--map", help="map document for obstacles")
    return parser


def _load_log(csv_path: Path) -> EpisodeLog:
    side = csv_path.with_suffix(".json")
    for f in (csv_path, side):
        if not f.is_file():
            raise FileNotFoundError(f"not found: {f}")
    return EpisodeLog.from_files(csv_path.read_text(), side.read_text())


def _report(m) -> dict:
    return {
        "outcome": m.outcome,
        "cte_rms": round(m.cte_rms, 3),
        "j_lin": round(m.j_lin, 3),
        "j_ang": round(m.j_ang, 3),
        "traversal_s": None if m.traversal_time is None else round(m.traversal_time, 3),
        "compute_hz": round(m.mean_compute_hz, 3),
    }


def _run(args, cfg: HarnessConfig) -> int:
    seed = getattr(args, "seed", None)
    jobs = getattr(args, "jobs", 1)
    out = Path(getattr(args, "out", None) or cfg.experiment.output_dir or ".")
    if jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    exp = cfg.experiment
    if seed is not None:
        exp = replace(exp, map_seeds=(seed,), seed=seed)
    w = cfg.world

    def make_map(s):
        return generate_scenario(s, w.width, w.height, w.obstacle_range, w.n_waypoints - 1)

    if args.command == "gen-map":
        s = 0 if seed is None else seed
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"map_{s}.json"
        path.write_text(save_map(make_map(s)))
        print(path)
    elif args.command == "run-episode":
        world = load_map(Path(args.map).read_text()) if args.map else make_map(seed or 0)
        st = cfg.stack
        log = run_episode(world, st.flags, st.mpc, st.sensor, st.arrival, st.timeout,
                          seed or 0, st.planning, st.robot_radius,
                          st.record_timing and not args.no_timing)
        out.mkdir(parents=True, exist_ok=True)
        (out / "episode.csv").write_text(log.to_csv())
        (out / "episode.json").write_text(log.sidecar())
        print(json.dumps(_report(episode_metrics(log))))
    elif args.command == "ablation":
        res = run_ablation(replace(exp, output_dir=str(out)), cfg.stack, jobs=jobs)
        for row in res["rows"]:
            print(" ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in row.items()))
    elif args.command == "sequencer-study":
        res = run_sequencer_study(replace(exp, output_dir=str(out)))
        for row in res["summary"]:
            print(" ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in row.items()))
    elif args.command == "metrics":
        print(json.dumps(_report(episode_metrics(_load_log(Path(args.log))))))
    elif args.command == "plot":
        from .plots import plot_trajectory

        logs = {Path(p).stem: _load_log(Path(p)) for p in args.log}
        world = load_map(Path(args.map).read_text()) if args.map else None
        print(plot_trajectory(logs, out / "trajectory.svg", world))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config) if getattr(args, "config", None) else HarnessConfig()
        return _run(args, cfg)
    except (ConfigError, MalformedMapError, MapInvariantError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ScenarioGenerationError, TooFewSamplesError, OSError,
            ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
