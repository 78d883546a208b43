"""Checks on the potential structure of a game.

A quasi-potential game needs a potential ``pi`` for the x-only parts of the
leader objectives: ``grad_{x_i} pi == grad_{x_i} phi_i`` for every leader.
This module checks that identity on sampled points, screens for the existence
of such a ``pi`` through symmetry of mixed partials, and builds a numeric
``pi`` by line integration when none is supplied.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

from . import grids, numdiff
from .errors import ExistenceCheckFailed, MissingPotentialError, RawModeError
from .expr import Expr, evaluate
from .model import GameInstance

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 64
MIXED_PARTIAL_STEP = 1e-4
QUADRATURE_STEPS = 256

Potential = Callable[[np.ndarray], float]


@dataclass
class CheckReport:
    name: str
    passed: bool
    max_deviation: float
    argmax_point: Optional[tuple[float, ...]]
    samples: int
    tol: float
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "pass": self.passed,
            "max_deviation": self.max_deviation,
            "argmax_point": None if self.argmax_point is None else list(self.argmax_point),
            "samples": self.samples,
            "tol": self.tol,
            "detail": self.detail,
        }


def _x_function(g: GameInstance, e: Expr) -> Potential:
    return lambda x: evaluate(e, g.x_env(x))


def _sample(g: GameInstance, samples: int) -> list[np.ndarray]:
    box = g.x_box
    return grids.halton_points(box.lower, box.upper, samples)


def _report(
    name: str, deviations: list[tuple[float, np.ndarray]], samples: int, tol: float, **detail
) -> CheckReport:
    if not deviations:
        return CheckReport(name, True, 0.0, None, samples, tol, detail)
    worst, at = max(deviations, key=lambda d: d[0])
    report = CheckReport(name, worst <= tol, float(worst), tuple(float(v) for v in at), samples, tol, detail)
    logger.info("%s: max deviation %.3e (tol %.1e) -> %s", name, report.max_deviation, tol, report.passed)
    return report


def check_gradient_identity(
    g: GameInstance,
    samples: int = DEFAULT_SAMPLES,
    tol: float = 1e-6,
    potential: Optional[Potential] = None,
    step: float = numdiff.DEFAULT_STEP,
) -> CheckReport:
    """Compare FD gradients of pi and of each phi_i in leader i's block.

    ``potential`` replaces the instance's pi, e.g. with a :class:`NumericPotential`.
    """
    if g.is_raw:
        raise RawModeError(f"{g.name} has per-leader couplings; the gradient identity needs a shared h")
    if potential is None:
        if g.pi is None:
            raise MissingPotentialError(f"{g.name} has no potential pi")
        potential = _x_function(g, g.pi)

    phis = [_x_function(g, leader.phi) for leader in g.leaders]
    deviations = []
    for x in _sample(g, samples):
        worst = 0.0
        for i, phi in enumerate(phis, start=1):
            block = range(g.block(i).start, g.block(i).stop)
            diff = numdiff.gradient(potential, x, block, step) - numdiff.gradient(phi, x, block, step)
            worst = max(worst, float(np.max(np.abs(diff))))
        deviations.append((worst, x))
    return _report("gradient_identity", deviations, samples, tol)


def check_potential_existence(
    g: GameInstance,
    samples: int = DEFAULT_SAMPLES,
    tol: float = 1e-6,
    step: float = MIXED_PARTIAL_STEP,
) -> CheckReport:
    """Necessary condition for a potential: d2 phi_i/dx_i dx_j == d2 phi_j/dx_j dx_i."""
    phis = [_x_function(g, leader.phi) for leader in g.leaders]
    pairs = [
        (i, j, k, l)
        for i in range(1, g.n_leaders + 1)
        for j in range(i + 1, g.n_leaders + 1)
        for k in range(g.block(i).start, g.block(i).stop)
        for l in range(g.block(j).start, g.block(j).stop)
    ]
    deviations = []
    for x in _sample(g, samples):
        worst = 0.0
        for i, j, k, l in pairs:
            left = numdiff.mixed_partial(phis[i - 1], x, k, l, step)
            right = numdiff.mixed_partial(phis[j - 1], x, l, k, step)
            worst = max(worst, abs(left - right))
        deviations.append((worst, x))
    return _report("potential_existence", deviations, samples, tol, pairs=len(pairs))


class NumericPotential:
    """Line-integral potential from the box midpoint; defined up to a constant."""

    def __init__(
        self,
        g: GameInstance,
        quadrature_steps: int = QUADRATURE_STEPS,
        step: float = numdiff.DEFAULT_STEP,
        existence: Optional[CheckReport] = None,
    ) -> None:
        if quadrature_steps < 1:
            raise ValueError("quadrature_steps must be positive")
        self.g = g
        self.origin = g.x_box.midpoint()
        self.quadrature_steps = quadrature_steps
        self.step = step
        self.existence = existence
        self._phis = [_x_function(g, leader.phi) for leader in g.leaders]
        self._blocks = [range(g.block(i).start, g.block(i).stop) for i in range(1, g.n_leaders + 1)]

    def _integrand(self, point: np.ndarray, direction: np.ndarray) -> float:
        total = 0.0
        for phi, block in zip(self._phis, self._blocks):
            grad = numdiff.gradient(phi, point, block, self.step)
            total += float(grad @ direction[block.start : block.stop])
        return total

    def __call__(self, x) -> float:
        target = self.g.x_vector(x)
        direction = target - self.origin
        ts = np.linspace(0.0, 1.0, self.quadrature_steps + 1)
        values = [self._integrand(self.origin + t * direction, direction) for t in ts]
        return float(trapezoid(values, ts))


def construct_potential(
    g: GameInstance,
    samples: int = DEFAULT_SAMPLES,
    tol: float = 1e-6,
    quadrature_steps: int = QUADRATURE_STEPS,
) -> NumericPotential:
    report = check_potential_existence(g, samples, tol)
    if not report.passed:
        raise ExistenceCheckFailed(report)
    return NumericPotential(g, quadrature_steps, existence=report)
