"""Dense box-constrained convex QP by a primal active-set method."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = ["solve_box_qp"]


def solve_box_qp(H, g, lo, hi, tol=1e-12, max_iter=500):
    """Minimize ``0.5 p'Hp + g'p`` subject to ``lo <= p <= hi``.

    ``H`` must be symmetric positive definite and ``lo <= 0 <= hi`` so that the
    origin is feasible. Returns ``(p, active)`` where ``active`` is an integer
    array with -1/+1 for indices held at the lower/upper bound, 0 otherwise.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    lo = np.minimum(np.asarray(lo, dtype=float), 0.0)
    hi = np.maximum(np.asarray(hi, dtype=float), 0.0)
    n = g.size
    p = np.zeros(n)
    side = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        free = side == 0
        grad = H @ p + g
        q = np.zeros(n)
        if free.any():
            Hff = H[np.ix_(free, free)]
            q[free] = cho_solve(cho_factor(Hff), -grad[free])
        if np.max(np.abs(q), initial=0.0) <= tol * (1.0 + np.max(np.abs(p), initial=0.0)):
            mult = np.where(side == -1, grad, np.where(side == 1, -grad, 0.0))
            worst = int(np.argmin(mult))
            if mult[worst] >= -tol * (1.0 + np.abs(grad).max(initial=0.0)):
                return p, side
            side[worst] = 0
            continue
        alpha, block, block_side = 1.0, -1, 0
        for i in np.flatnonzero(free):
            if q[i] < 0.0:
                a = (lo[i] - p[i]) / q[i]
                if a < alpha:
                    alpha, block, block_side = max(a, 0.0), i, -1
            elif q[i] > 0.0:
                a = (hi[i] - p[i]) / q[i]
                if a < alpha:
                    alpha, block, block_side = max(a, 0.0), i, 1
        p = p + alpha * q
        if block >= 0:
            side[block] = block_side
            p[block] = lo[block] if block_side < 0 else hi[block]
    return np.clip(p, lo, hi), side
