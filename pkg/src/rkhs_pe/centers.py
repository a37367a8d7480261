"""Center placement strategies for indexing sets."""

from __future__ import annotations

import numpy as np

from .dynamics import LimitSetEstimate, Trajectory, extract_limit_set

__all__ = ["thin_to_count", "circle_centers", "explicit_centers"]


def thin_to_count(traj: Trajectory, n: int, t_cut: float, iters: int = 40) -> LimitSetEstimate:
    """
    Thin the tail after ``t_cut`` to ``n`` points.

    Bisects on the spacing for the largest value that still keeps at least
    ``n`` points, then truncates to the first ``n`` in time order.  The
    point count is not monotone in the spacing for every orbit, so the
    truncation is what guarantees the exact count.
    """
    if n < 1:
        raise ValueError("need at least one center")
    tail = traj.states[traj.times >= t_cut]
    if tail.shape[0] == 0:
        raise ValueError("empty tail")
    hi = float(np.max(np.ptp(tail, axis=0))) * 2.0 + 1e-12
    lo = 0.0
    best = None
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= 0:
            break
        est = extract_limit_set(traj, t_cut, mid)
        if est.points.shape[0] >= n:
            lo, best = mid, est
        else:
            hi = mid
    if best is None:
        raise ValueError(f"tail has fewer than {n} distinct samples")
    return LimitSetEstimate(points=best.points[:n].copy(), t_cut=best.t_cut, spacing=best.spacing)


def circle_centers(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> np.ndarray:
    """n equally spaced points on a circle, the first on the positive x1 axis."""
    if n < 1 or not radius > 0:
        raise ValueError("need n >= 1 and a positive radius")
    th = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def explicit_centers(points, dim: int) -> np.ndarray:
    C = np.atleast_2d(np.asarray(points, dtype=float))
    if C.size == 0:
        raise ValueError("explicit center list is empty")
    if C.shape[1] != dim:
        raise ValueError(f"centers have {C.shape[1]} coordinates, system has {dim}")
    return C
