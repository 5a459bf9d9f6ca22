"""Turn correction on an L corridor with a coarse reference path.

Without the filter the tracker rounds the bend and clips the inside corner;
with it the robot runs up to the corner before turning.

    python demos/corner_cutting.py [out_dir]
"""

import sys
from pathlib import Path

from waynav import FeatureFlags, MpcConfig, PlanningConfig, run_episode
from waynav.harness.corpus import l_corridor
from waynav.harness.plots import plot_trajectory

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
world = l_corridor(5, 4, left=True)
planning = PlanningConfig(fixed_resolution=1)
logs = {}
for name, flags in (("turn correction", FeatureFlags(False, True, True)),
                    ("no correction", FeatureFlags(False, False, False))):
    log = run_episode(world, flags, MpcConfig(), planning=planning, timeout=60,
                      record_timing=False)
    logs[name] = log
    print(f"{name:>16}: {log.outcome} after {log.samples[-1].t:.1f} s")
print(plot_trajectory(logs, out / "corner_cutting.svg", world))
