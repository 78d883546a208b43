"""Finite-difference kernels over functions of a real vector.

All steps are relative: the effective step at coordinate value v is
``step * max(1, |v|)``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

VectorFunction = Callable[[np.ndarray], float]

DEFAULT_STEP = 1e-5


def effective_step(value: float, step: float) -> float:
    return step * max(1.0, abs(value))


def _shifted(point: np.ndarray, index: int, delta: float) -> np.ndarray:
    moved = np.array(point, dtype=float, copy=True)
    moved[index] += delta
    return moved


def central_difference(
    func: VectorFunction, point: np.ndarray, index: int, step: float = DEFAULT_STEP
) -> float:
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    h = effective_step(float(point[index]), step)
    upper = func(_shifted(point, index, h))
    lower = func(_shifted(point, index, -h))
    return (upper - lower) / (2.0 * h)


def gradient(func: VectorFunction, point: np.ndarray, indices, step: float = DEFAULT_STEP) -> np.ndarray:
    return np.array([central_difference(func, point, k, step) for k in indices], dtype=float)


def one_sided_slopes(func: VectorFunction, point: np.ndarray, index: int, step: float) -> tuple[float, float]:
    """Return (backward, forward) difference quotients at ``point``."""
    h = effective_step(float(point[index]), step)
    centre = func(point)
    forward = (func(_shifted(point, index, h)) - centre) / h
    backward = (centre - func(_shifted(point, index, -h))) / h
    return backward, forward


def mixed_partial(func: VectorFunction, point: np.ndarray, i: int, j: int, step: float) -> float:
    """Second-order central estimate of d^2 f / dx_i dx_j for i != j."""
    hi = effective_step(float(point[i]), step)
    hj = effective_step(float(point[j]), step)

    def at(di: float, dj: float) -> float:
        moved = np.array(point, dtype=float, copy=True)
        moved[i] += di
        moved[j] += dj
        return func(moved)

    return (at(hi, hj) - at(hi, -hj) - at(-hi, hj) + at(-hi, -hj)) / (4.0 * hi * hj)
