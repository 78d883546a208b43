"""Coordinate pattern search over a box.

Each sweep tries ``+step`` then ``-step`` along every coordinate and keeps the
first strict improvement. A coordinate whose step fails both ways has its
step shrunk. The search stops once every step is below ``min_step`` or after
``max_iters`` sweeps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Generic, Optional, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

P = TypeVar("P")

# Returns (value, payload), or None where the point is infeasible.
Objective = Callable[[np.ndarray], Optional[tuple[float, P]]]


@dataclass
class SearchResult(Generic[P]):
    x: np.ndarray
    value: float
    payload: P
    trace: list[float] = field(default_factory=list)
    moves: int = 0
    sweeps: int = 0


def pattern_search(
    func: Objective,
    start: Sequence[float],
    start_value: float,
    start_payload: P,
    steps: Sequence[float],
    lower: Sequence[float],
    upper: Sequence[float],
    shrink: float = 0.5,
    min_step: float = 1e-6,
    max_iters: int = 200,
    improvement_tol: float = 1e-12,
) -> SearchResult[P]:
    x = np.asarray(start, dtype=float).copy()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dp = np.array(steps, dtype=float)
    result = SearchResult(x=x, value=start_value, payload=start_payload, trace=[start_value])

    while result.sweeps < max_iters and np.any(dp >= min_step):
        result.sweeps += 1
        for k in range(x.size):
            if dp[k] < min_step:
                continue
            moved = False
            for sign in (1.0, -1.0):
                probe = result.x.copy()
                probe[k] = np.clip(probe[k] + sign * dp[k], lower[k], upper[k])
                if probe[k] == result.x[k]:
                    continue
                outcome = func(probe)
                if outcome is None:
                    continue
                value, payload = outcome
                if value < result.value - improvement_tol:
                    logger.debug("pattern search: %s -> %.12g", tuple(probe), value)
                    result.x, result.value, result.payload = probe, value, payload
                    result.trace.append(value)
                    result.moves += 1
                    moved = True
                    break
            if not moved:
                dp[k] *= shrink
    return result
