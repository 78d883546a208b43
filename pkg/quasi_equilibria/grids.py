"""Deterministic grids over interval products."""

from __future__ import annotations

import itertools
from collections import deque
from typing import Sequence

import numpy as np
from scipy.stats import qmc


def axis(lower: float, upper: float, count: int) -> np.ndarray:
    """``count`` evenly spaced points including both ends; one point if degenerate."""
    if upper == lower:
        return np.array([float(lower)])
    if count == 1:
        return np.array([0.5 * (lower + upper)])
    return np.linspace(lower, upper, count)


def spacing(lower: float, upper: float, count: int) -> float:
    if upper == lower or count <= 1:
        return 0.0
    return (upper - lower) / (count - 1)


def tensor_axes(lower: Sequence[float], upper: Sequence[float], count: int) -> list[np.ndarray]:
    return [axis(lo, hi, count) for lo, hi in zip(lower, upper)]


def product_grid(lower: Sequence[float], upper: Sequence[float], count: int) -> list[np.ndarray]:
    """Points of the tensor grid, first coordinate varying slowest."""
    axes = tensor_axes(lower, upper, count)
    return [np.array(point, dtype=float) for point in itertools.product(*axes)]


def ball_grid(
    centre: Sequence[float],
    radius: float,
    lower: Sequence[float],
    upper: Sequence[float],
    count: int,
) -> list[np.ndarray]:
    """Grid over the sup-norm ball around ``centre`` clipped to the box, centre included."""
    centre = np.asarray(centre, dtype=float)
    lo = np.maximum(centre - radius, lower)
    hi = np.minimum(centre + radius, upper)
    points = product_grid(lo, hi, count)
    if not any(np.array_equal(p, centre) for p in points):
        points.append(centre.copy())
    return points


def halton_points(lower: Sequence[float], upper: Sequence[float], samples: int) -> list[np.ndarray]:
    """First ``samples`` points of the unscrambled Halton sequence mapped onto the box."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    unit = qmc.Halton(d=lower.size, scramble=False).random(samples)
    return [lower + u * (upper - lower) for u in unit]


def bisection_depths(count: int) -> list[int]:
    """Level at which each of ``count`` axis indices appears when the axis is
    filled by repeated bisection: both ends at 0, the midpoint at 1, and so on."""
    depths = [0] * count
    queue = deque([(0, count - 1, 1)])
    while queue:
        lo, hi, level = queue.popleft()
        if hi - lo < 2:
            continue
        mid = (lo + hi) // 2
        depths[mid] = level
        queue.append((lo, mid, level + 1))
        queue.append((mid, hi, level + 1))
    return depths


def coarse_to_fine(shape: Sequence[int]) -> list[tuple[int, ...]]:
    """Multi-indices of a tensor grid, coarsest bisection level first.

    Within a level the :func:`product_grid` order is kept.
    """
    depths = [bisection_depths(n) for n in shape]
    index = list(itertools.product(*(range(n) for n in shape)))
    level = {idx: max((depths[d][i] for d, i in enumerate(idx)), default=0) for idx in index}
    return sorted(index, key=lambda idx: level[idx])
