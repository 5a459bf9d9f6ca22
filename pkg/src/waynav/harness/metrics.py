"""Episode metrics: RMS cross-track error, jerk, traversal time, compute frequency."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "MetricsReport",
    "TooFewSamplesError",
    "point_polyline_distance",
    "cross_track_error",
    "jerk_metrics",
    "jerk_from_series",
    "traversal_time",
    "compute_frequency",
    "episode_metrics",
]


class TooFewSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    cte_rms: float
    j_lin: float
    j_ang: float
    traversal_time: Optional[float]
    mean_compute_hz: float
    outcome: str


def point_polyline_distance(x: float, y: float, polyline) -> float:
    """Shortest distance from a point to a polyline (segments, not just vertices)."""
    pts = np.asarray(polyline, dtype=float)[:, :2]
    if len(pts) == 1:
        return float(math.hypot(x - pts[0, 0], y - pts[0, 1]))
    a, b = pts[:-1], pts[1:]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    ap = np.array([x, y]) - a
    t = np.divide(np.einsum("ij,ij->i", ap, ab), L2, out=np.zeros_like(L2), where=L2 > 0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return float(np.min(np.hypot(x - closest[:, 0], y - closest[:, 1])))


def cross_track_error(log, paths=None) -> float:
    """RMS over samples of the distance to the reference path active at that sample.

    ``paths`` defaults to ``log.paths`` (the unfiltered plans); samples taken
    while no path existed are skipped.
    """
    paths = log.paths if paths is None else paths
    if not log.samples:
        raise TooFewSamplesError("empty log")
    d = [
        point_polyline_distance(s.state.x, s.state.y, paths[s.path_index].points)
        for s in log.samples
        if s.path_index >= 0
    ]
    if not d:
        return 0.0
    return float(np.sqrt(np.mean(np.square(d))))


def jerk_from_series(v, omega, dt: float) -> tuple:
    """Mean absolute central-difference second derivative, times ``dt``."""
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    n = len(v)
    if n < 3:
        raise TooFewSamplesError(f"jerk needs at least 3 samples, got {n}")
    vdd = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dt**2
    wdd = (omega[2:] - 2.0 * omega[1:-1] + omega[:-2]) / dt**2
    return (float(np.sum(np.abs(vdd)) * dt / (n - 2)), float(np.sum(np.abs(wdd)) * dt / (n - 2)))


def jerk_metrics(log) -> tuple:
    return jerk_from_series(log.column("v"), log.column("omega"), log.h)


def traversal_time(log) -> Optional[float]:
    """Time of GOAL_REACHED, or None if the episode did not succeed."""
    if log.outcome != "SUCCESS":
        return None
    times = log.event_times("GOAL_REACHED")
    return float(times[-1]) if times else None


def compute_frequency(log) -> float:
    """Ticks per second of pipeline compute; NaN when timing was not recorded."""
    if not log.samples:
        raise TooFewSamplesError("empty log")
    total = float(np.sum(log.column("compute_s")))
    return len(log.samples) / total if total > 0 else math.nan


def episode_metrics(log) -> MetricsReport:
    if len(log.samples) >= 3:
        j_lin, j_ang = jerk_metrics(log)
    else:
        j_lin = j_ang = math.nan
    return MetricsReport(
        cte_rms=cross_track_error(log),
        j_lin=j_lin,
        j_ang=j_ang,
        traversal_time=traversal_time(log),
        mean_compute_hz=compute_frequency(log),
        outcome=log.outcome,
    )
