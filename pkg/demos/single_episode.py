"""Drive one seeded map with every feature on and save a trajectory plot.

    python demos/single_episode.py [seed] [out_dir]
"""

import sys
from pathlib import Path

from waynav import FeatureFlags, generate_scenario, run_episode
from waynav.harness.metrics import episode_metrics
from waynav.harness.plots import plot_trajectory

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
out = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_out")

world = generate_scenario(seed, 10, 10, (25, 35), 7)
log = run_episode(world, FeatureFlags(), record_timing=False)
m = episode_metrics(log)
print(f"seed {seed}: {m.outcome}, CTE {m.cte_rms:.3f} m, "
      f"jerk {m.j_lin:.3f} / {m.j_ang:.3f}, time {m.traversal_time} s")
for e in log.events:
    if e.kind != "OBSTACLE_DETECTED":
        print(f"  {e.t:7.1f}  {e.kind} {e.detail}")
print(plot_trajectory({"all features": log}, out / f"episode_{seed}.svg", world))
