import json

import pytest

from waynav.harness.cli import main
from waynav.harness.config import (
    ConfigError,
    HarnessConfig,
    config_to_dict,
    load_config,
    parse_config,
)
from waynav.world import load_map


def test_defaults_round_trip():
    cfg = HarnessConfig()
    again = parse_config(json.loads(json.dumps(config_to_dict(cfg))))
    assert config_to_dict(again) == config_to_dict(cfg)


def test_partial_config():
    cfg = parse_config({
        "world": {"width": 6, "height": 5, "obstacle_range": [2, 4], "n_waypoints": 3},
        "mpc": {"N": 8, "profiles": {"TURN": {"q": [1, 1, 9], "r": [1, 0.1]}}},
        "flags": {"sequencer_method": "probabilistic", "gamma": 0.25},
        "episode": {"timeout": 30},
    })
    assert cfg.stack.mpc.N == 8
    assert cfg.stack.mpc.profiles["TURN"].q == (1.0, 1.0, 9.0)
    assert cfg.stack.mpc.profiles["STRAIGHT"].label == "STRAIGHT"
    assert cfg.stack.flags.sequencer_method == "PROBABILISTIC"
    assert cfg.stack.timeout == 30
    assert cfg.experiment.width == 6 and cfg.experiment.waypoint_counts == (3,)


@pytest.mark.parametrize("doc,msg", [
    ({"wrld": {}}, "unknown config section"),
    ({"mpc": {"horizon": 3}}, "unknown field"),
    ({"mpc": {"profiles": {"CURVE": {}}}}, "unknown weight profile"),
    ({"mpc": {"N": 0}}, "N >= 1"),
    ({"experiment": {"gammas": [0.0]}}, "gammas"),
    ({"flags": {"sequencer_method": "PROBABILISTIC"}}, "flags"),
    ({"episode": {"speed": 1}}, "episode"),
])
def test_invalid_configs(doc, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(doc)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(bad)


def test_cli_usage_and_config_errors(tmp_path, capsys):
    assert main(["bogus"]) == 1
    bad = tmp_path / "c.json"
    bad.write_text('{"mpc": {"N": -1}}')
    assert main(["gen-map", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["metrics", "--log", str(tmp_path / "none.csv")]) == 2
    assert "not found" in capsys.readouterr().err


def test_cli_gen_map_run_metrics_plot(tmp_path, capsys):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({
        "world": {"width": 6, "height": 6, "obstacle_range": [3, 5], "n_waypoints": 2},
        "episode": {"timeout": 60},
    }))
    assert main(["gen-map", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path)]) == 0
    world = load_map((tmp_path / "map_3.json").read_text())
    assert world.width == 6 and len(world.waypoints) == 1
    capsys.readouterr()
    run_dir = tmp_path / "run"
    assert main(["run-episode", "--config", str(cfg), "--map", str(tmp_path / "map_3.json"),
                 "--out", str(run_dir), "--no-timing"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["outcome"] == "SUCCESS"
    assert main(["metrics", "--log", str(run_dir / "episode.csv")]) == 0
    again = json.loads(capsys.readouterr().out)
    assert again["cte_rms"] == report["cte_rms"] and again["j_ang"] == report["j_ang"]
    assert main(["plot", "--log", str(run_dir / "episode.csv"), "--map",
                 str(tmp_path / "map_3.json"), "--out", str(run_dir)]) == 0
    assert (run_dir / "trajectory.svg").read_text().startswith("<?xml")
