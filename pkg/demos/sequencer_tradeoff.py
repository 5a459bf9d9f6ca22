"""Accuracy and search effort of the probabilistic sequencer as gamma grows.

    python demos/sequencer_tradeoff.py
"""

import math

from waynav.harness.config import ExperimentConfig
from waynav.harness.experiments import scenario_maps
from waynav.sequencer import accuracy_trial

maps = scenario_maps(ExperimentConfig(map_seeds=range(10), waypoint_counts=(8,)))
m = len(maps[0].waypoints)
print(f"{len(maps)} maps, {m} intermediates, {math.factorial(m)} orderings")
print(f"{'method':>14} {'gamma':>6} {'accuracy':>9} {'perms':>7} {'ms':>8}")
for method, gamma in [("GREEDY", 1.0), ("BCP", 1.0)] + [
        ("PROBABILISTIC", g) for g in (0.1, 0.25, 0.5, 0.75, 1.0)]:
    r = accuracy_trial(maps, method, gamma, repeats=10)
    print(f"{method:>14} {gamma:6.2f} {r['accuracy']:9.2f} "
          f"{r['mean_perms_evaluated']:7.0f} {r['mean_elapsed'] * 1e3:8.2f}")
