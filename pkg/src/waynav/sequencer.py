"""Next-waypoint selection: greedy, exhaustive best-cost path, probabilistic fractional search.

Every method works on planar coordinates (cell centers, meters). Tours start at
the robot's current position and, for the permutation methods, always end at
the final goal; only the free intermediates are permuted.

Permutations are addressed by their rank in lexicographic order of
``itertools.permutations(range(m))``. Exhaustive search streams the ranks in
chunks so memory stays bounded; the probabilistic search shuffles the ranks and
keeps a prefix.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "SequencerResult",
    "EmptyPendingError",
    "EnumerationBudgetError",
    "COST_TOL",
    "MAX_FREE",
    "euclidean_dist",
    "dist_metric",
    "greedy_next",
    "bcp_next",
    "probabilistic_next",
    "retained_count",
    "unrank_permutations",
    "optimal_tour_cost",
    "all_tour_costs",
    "run_full_tour",
    "accuracy_trial",
    "SEQUENCER_CSV_COLUMNS",
]

COST_TOL = 1e-9
MAX_FREE = 10
_CHUNK = 1 << 16

SEQUENCER_CSV_COLUMNS = (
    "map_seed", "method", "gamma", "repeat", "tour_cost", "best_cost",
    "match", "elapsed_s", "perms_evaluated",
)


class EmptyPendingError(ValueError):
    pass


class EnumerationBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class SequencerResult:
    chosen: tuple
    tour_cost: float
    permutations_evaluated: int
    elapsed: float
    order: tuple = ()


def euclidean_dist(a, b) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def dist_metric(tour) -> float:
    total = 0.0
    for i in range(len(tour) - 1):
        total += euclidean_dist(tour[i], tour[i + 1])
    return total


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")


def retained_count(gamma: float, n_perms: int) -> int:
    """Number of shuffled permutations kept by the probabilistic search."""
    _check_gamma(gamma)
    # round before ceil so 0.5 * 120 stays 60 despite float noise
    return max(1, math.ceil(round(gamma * n_perms, 9)))


def unrank_permutations(ranks: np.ndarray, m: int) -> np.ndarray:
    """Lexicographic permutations of ``range(m)`` for each rank, shape ``(len(ranks), m)``."""
    ranks = np.asarray(ranks, dtype=np.int64)
    out = np.empty((ranks.size, m), dtype=np.int64)
    available = np.ones((ranks.size, m), dtype=bool)
    rem = ranks.copy()
    rows = np.arange(ranks.size)
    for pos in range(m):
        f = math.factorial(m - 1 - pos)
        digit = rem // f
        rem -= digit * f
        # the (digit)-th still-available element
        order = np.cumsum(available, axis=1) - 1
        hit = available & (order == digit[:, None])
        idx = np.argmax(hit, axis=1)
        out[:, pos] = idx
        available[rows, idx] = False
    return out


def _tour_costs(perms: np.ndarray, dmat: np.ndarray) -> np.ndarray:
    """Cost of start -> perm... -> goal. Node 0 is start, 1..m intermediates, m+1 goal."""
    m = perms.shape[1]
    nodes = perms + 1
    cost = dmat[0, nodes[:, 0]] + dmat[nodes[:, -1], m + 1]
    for k in range(m - 1):
        cost = cost + dmat[nodes[:, k], nodes[:, k + 1]]
    return cost


def _distance_matrix(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def _split_goal(pending, goal):
    """Free intermediates: ``pending`` minus one copy of ``goal``."""
    pending = [tuple(map(float, p)) for p in pending]
    goal = tuple(map(float, goal))
    for i, p in enumerate(pending):
        if p == goal:
            return pending[:i] + pending[i + 1 :], goal
    return pending, goal


def _argmin_first(costs: np.ndarray) -> int:
    best = costs.min()
    return int(np.flatnonzero(costs <= best + COST_TOL)[0])


def greedy_next(current, pending: Sequence, goal=None) -> SequencerResult:
    """Nearest pending waypoint; the goal is held back until it is the only one left.

    Ties go to the lowest index in ``pending``.
    """
    t0 = time.perf_counter()
    if len(pending) == 0:
        raise EmptyPendingError("no pending waypoints")
    candidates = list(range(len(pending)))
    if goal is not None:
        goal = tuple(map(float, goal))
        non_goal = [i for i in candidates if tuple(map(float, pending[i])) != goal]
        if non_goal:
            candidates = non_goal
    best_i = candidates[0]
    best_d = euclidean_dist(current, pending[best_i])
    for i in candidates[1:]:
        d = euclidean_dist(current, pending[i])
        if d < best_d - COST_TOL:
            best_i, best_d = i, d
    chosen = tuple(map(float, pending[best_i]))
    return SequencerResult(chosen, best_d, len(pending), time.perf_counter() - t0, (chosen,))


def bcp_next(current, pending: Sequence, goal, max_free: int = MAX_FREE) -> SequencerResult:
    """Exhaustive best-cost path over all orderings of the free intermediates.

    ``goal`` may or may not appear in ``pending``; it is always the last tour element.
    """
    t0 = time.perf_counter()
    if len(pending) == 0:
        raise EmptyPendingError("no pending waypoints")
    free, goal = _split_goal(pending, goal)
    m = len(free)
    if m > max_free:
        raise EnumerationBudgetError(f"{m} free intermediates exceed the cap of {max_free}")
    current = tuple(map(float, current))
    if m == 0:
        cost = euclidean_dist(current, goal)
        return SequencerResult(goal, cost, 1, time.perf_counter() - t0, (goal,))
    dmat = _distance_matrix([current] + free + [goal])
    total = math.factorial(m)
    best_cost, best_rank = math.inf, 0
    for lo in range(0, total, _CHUNK):
        ranks = np.arange(lo, min(total, lo + _CHUNK))
        costs = _tour_costs(unrank_permutations(ranks, m), dmat)
        i = _argmin_first(costs)
        if costs[i] < best_cost - COST_TOL:
            best_cost, best_rank = float(costs[i]), int(ranks[i])
    perm = unrank_permutations(np.array([best_rank]), m)[0]
    order = tuple(free[k] for k in perm) + (goal,)
    return SequencerResult(order[0], best_cost, total, time.perf_counter() - t0, order)


def probabilistic_next(
    current, pending: Sequence, goal, gamma: float, seed: int, max_free: int = MAX_FREE
) -> SequencerResult:
    """Best tour within a seeded random fraction ``gamma`` of the ordering space.

    The full list of constrained orderings is shuffled and the first
    ``max(1, ceil(gamma * m!))`` are scored; the earliest minimizer in shuffled
    order wins.
    """
    t0 = time.perf_counter()
    _check_gamma(gamma)
    if len(pending) == 0:
        raise EmptyPendingError("no pending waypoints")
    free, goal = _split_goal(pending, goal)
    m = len(free)
    if m > max_free:
        raise EnumerationBudgetError(f"{m} free intermediates exceed the cap of {max_free}")
    current = tuple(map(float, current))
    if m == 0:
        cost = euclidean_dist(current, goal)
        return SequencerResult(goal, cost, 1, time.perf_counter() - t0, (goal,))
    dmat = _distance_matrix([current] + free + [goal])
    total = math.factorial(m)
    keep = retained_count(gamma, total)
    ranks = np.random.default_rng(seed).permutation(total)[:keep]
    best_cost, best_perm = math.inf, None
    for lo in range(0, keep, _CHUNK):
        perms = unrank_permutations(ranks[lo : lo + _CHUNK], m)
        costs = _tour_costs(perms, dmat)
        i = _argmin_first(costs)
        if costs[i] < best_cost - COST_TOL:
            best_cost, best_perm = float(costs[i]), perms[i]
    order = tuple(free[k] for k in best_perm) + (goal,)
    return SequencerResult(order[0], best_cost, keep, time.perf_counter() - t0, order)


def all_tour_costs(start, intermediates: Sequence, goal, max_free: int = MAX_FREE) -> np.ndarray:
    """Cost of every ordering of ``intermediates``, indexed by lexicographic rank."""
    free = [tuple(map(float, p)) for p in intermediates]
    m = len(free)
    if m > max_free:
        raise EnumerationBudgetError(f"{m} free intermediates exceed the cap of {max_free}")
    dmat = _distance_matrix([tuple(map(float, start))] + free + [tuple(map(float, goal))])
    if m == 0:
        return np.array([dmat[0, 1]])
    total = math.factorial(m)
    return np.concatenate([
        _tour_costs(unrank_permutations(np.arange(lo, min(lo + _CHUNK, total)), m), dmat)
        for lo in range(0, total, _CHUNK)
    ])


def optimal_tour_cost(start, intermediates: Sequence, goal, max_free: int = MAX_FREE) -> float:
    return bcp_next(start, list(intermediates) + [goal], goal, max_free).tour_cost


def run_full_tour(method: str, start, intermediates: Sequence, goal, gamma: float = 1.0,
                  seed: int = 0, max_free: int = MAX_FREE):
    """Visit everything by repeatedly asking ``method`` for the next waypoint.

    Returns ``(tour, first_result, elapsed_seconds)`` where ``tour`` starts at
    ``start`` and ends at ``goal``. Each probabilistic step draws a fresh seed
    from a generator seeded with ``seed``.
    """
    method = method.upper()
    start = tuple(map(float, start))
    goal = tuple(map(float, goal))
    pending = [tuple(map(float, p)) for p in intermediates] + [goal]
    step_seeds = np.random.SeedSequence(seed)
    tour = [start]
    first = None
    elapsed = 0.0
    current = start
    while pending:
        if method == "GREEDY":
            res = greedy_next(current, pending, goal)
        elif method == "BCP":
            res = bcp_next(current, pending, goal, max_free)
        elif method == "PROBABILISTIC":
            child = int(step_seeds.spawn(1)[0].generate_state(1)[0])
            res = probabilistic_next(current, pending, goal, gamma, child, max_free)
        else:
            raise ValueError(f"unknown sequencer method {method!r}")
        elapsed += res.elapsed
        if first is None:
            first = res
        pending.remove(res.chosen)
        tour.append(res.chosen)
        current = res.chosen
    return tour, first, elapsed


def accuracy_trial(maps, method: str, gamma: float = 1.0, repeats: int = 1, seed: int = 0,
                   max_free: int = MAX_FREE, rows: list | None = None) -> dict:
    """Fraction of trials whose realized tour matches the exhaustive optimum.

    ``maps`` are :class:`~waynav.world.WorldMap` values. If ``rows`` is given,
    one dict per (map, repeat) is appended with the columns of
    ``SEQUENCER_CSV_COLUMNS``.
    """
    method = method.upper()
    matches = trials = 0
    elapsed_total = 0.0
    perms_total = 0
    for k, world in enumerate(maps):
        start = world.start.center
        goal = world.goal.center
        inter = [w.center for w in world.waypoints]
        best = optimal_tour_cost(start, inter, goal, max_free)
        for rep in range(repeats):
            trial_seed = int(np.random.SeedSequence([seed, k, rep]).generate_state(1)[0])
            tour, first, elapsed = run_full_tour(method, start, inter, goal, gamma, trial_seed,
                                                 max_free)
            cost = dist_metric(tour)
            match = abs(cost - best) <= COST_TOL
            matches += match
            trials += 1
            elapsed_total += elapsed
            perms_total += first.permutations_evaluated
            if rows is not None:
                rows.append({
                    "map_seed": world.seed, "method": method,
                    "gamma": gamma if method == "PROBABILISTIC" else "",
                    "repeat": rep, "tour_cost": cost, "best_cost": best, "match": int(match),
                    "elapsed_s": elapsed, "perms_evaluated": first.permutations_evaluated,
                })
    if trials == 0:
        raise ValueError("accuracy_trial needs at least one map")
    return {
        "method": method,
        "gamma": gamma,
        "trials": trials,
        "accuracy": matches / trials,
        "mean_elapsed": elapsed_total / trials,
        "mean_perms_evaluated": perms_total / trials,
    }
