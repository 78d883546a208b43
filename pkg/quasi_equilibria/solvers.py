"""Reduction solvers for quasi-potential games.

The optimistic problem minimises ``pi(x) + h(x, w)`` over ``x in X`` and
``w in S(x)``; the pessimistic one minimises the worst member of S(x) instead;
the implicit one needs S(x) single-valued. All three scan a tensor grid over X
and refine the best grid point by pattern search, re-enumerating S(x) at
every probe. A minimiser lifts to a leader profile with every ``y_i = w``.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import (
    InfeasibleProblem,
    MissingPotentialError,
    MultivaluedDetected,
    RawModeError,
)
from .model import GameInstance
from .parallel import ordered_map
from .potential import CheckReport
from .search import pattern_search
from .vi import SolutionCache, SolutionSet, VIConfig, natural_map_residual

logger = logging.getLogger(__name__)

OPTIMISTIC = "optimistic"
PESSIMISTIC = "pessimistic"
IMPLICIT = "implicit"

STATUS_OPTIMAL_ON_GRID = "optimal_on_grid"
STATUS_REFINED = "refined"


class SolveConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    grid: int = Field(41, ge=2)
    refine: bool = True
    shrink: float = Field(0.5, gt=0, lt=1)
    min_step: float = Field(1e-6, gt=0)
    max_refine_iters: int = Field(200, ge=0)
    improvement_tol: float = Field(1e-12, ge=0)
    tie_tol: float = Field(1e-12, ge=0)
    threads: int = Field(1, gt=0)
    vi: VIConfig = Field(default_factory=VIConfig)


@dataclass(frozen=True)
class Profile:
    x: tuple[float, ...]
    y: tuple[tuple[float, ...], ...]

    def to_dict(self) -> dict[str, Any]:
        return {"x": list(self.x), "y": [list(block) for block in self.y]}


def lift_to_profile(x: Sequence[float], w: Sequence[float], n: int) -> Profile:
    """Copy the shared follower response to every leader: y_i = w."""
    block = tuple(float(v) for v in np.asarray(w, dtype=float).reshape(-1))
    return Profile(x=tuple(float(v) for v in np.asarray(x, dtype=float).reshape(-1)), y=(block,) * n)


@dataclass
class SolveReport:
    instance: str
    mode: str
    status: str
    x: tuple[float, ...]
    w: tuple[float, ...]
    value: float
    display_value: float
    profile: Profile
    residual: float
    exhaustive: bool
    grid_points: int
    feasible_points: int
    refinement_trace: list[float]
    wall_ms: float
    x_names: tuple[str, ...] = ()
    w_names: tuple[str, ...] = ()
    scan_rows: list[tuple[tuple[float, ...], tuple[float, ...], float]] = field(
        default_factory=list, repr=False
    )

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance": self.instance,
            "mode": self.mode,
            "status": self.status,
            "x": list(self.x),
            "w": list(self.w),
            "value": self.value,
            "display_value": self.display_value,
            "profile": self.profile.to_dict(),
            "residual": self.residual,
            "exhaustive": self.exhaustive,
            "grid_points": self.grid_points,
            "feasible_points": self.feasible_points,
            "refinement": {"moves": len(self.refinement_trace) - 1, "trace": self.refinement_trace},
            "wall_ms": self.wall_ms,
        }


@dataclass
class _Candidate:
    x: np.ndarray
    value: float
    w: np.ndarray
    exhaustive: bool
    rows: list[tuple[tuple[float, ...], tuple[float, ...], float]]


def _require_reduction(g: GameInstance) -> None:
    if g.is_raw:
        raise RawModeError(f"{g.name} has per-leader couplings and is not quasi-potential; use verify")
    if g.pi is None:
        raise MissingPotentialError(f"{g.name} has no potential pi; the reduction needs one")


class _PointEvaluator:
    """Value of the reduced objective at x under one of the three formulations."""

    def __init__(self, g: GameInstance, cfg: SolveConfig, mode: str, cache: Optional[SolutionCache] = None):
        self.g = g
        self.cfg = cfg
        self.mode = mode
        self.cache = cache or SolutionCache(g, cfg.vi)

    def choose(self, x: np.ndarray, solutions: SolutionSet) -> tuple[float, np.ndarray, list]:
        if self.mode == IMPLICIT and len(solutions) > 1:
            raise MultivaluedDetected(x, len(solutions))
        scored = [(self.g.quasi_potential(x, w), w) for w in solutions]
        rows = [(tuple(map(float, x)), tuple(map(float, w)), float(value)) for value, w in scored]
        if self.mode == PESSIMISTIC:
            target = max(value for value, _ in scored)
            value, w = next((v, w) for v, w in scored if v >= target - self.cfg.tie_tol)
        else:
            target = min(value for value, _ in scored)
            value, w = next((v, w) for v, w in scored if v <= target + self.cfg.tie_tol)
        return value, w, rows

    def __call__(self, x) -> Optional[_Candidate]:
        x = np.asarray(x, dtype=float)
        solutions = self.cache.get(x)
        if solutions is None:
            return None
        value, w, rows = self.choose(x, solutions)
        return _Candidate(x, value, w, solutions.exhaustive, rows)


def _scan(evaluator: _PointEvaluator) -> tuple[_Candidate, int, int, list, bool]:
    g, cfg = evaluator.g, evaluator.cfg
    points = g.x_box.grid(cfg.grid)
    results = ordered_map(evaluator, points, cfg.threads)
    best: Optional[_Candidate] = None
    rows: list = []
    feasible = 0
    exhaustive = True
    for candidate in results:
        if candidate is None:
            continue
        feasible += 1
        exhaustive = exhaustive and candidate.exhaustive
        rows.extend(candidate.rows)
        if best is None or candidate.value < best.value - cfg.tie_tol:
            best = candidate
    if best is None:
        raise InfeasibleProblem(f"{g.name}: S(x) is empty at all {len(points)} grid points")
    logger.info(
        "%s scan of %s: %d/%d grid points feasible, best %.12g at %s",
        evaluator.mode,
        g.name,
        feasible,
        len(points),
        best.value,
        tuple(best.x),
    )
    return best, len(points), feasible, rows, exhaustive


def _refine(evaluator: _PointEvaluator, start: _Candidate) -> tuple[_Candidate, list[float]]:
    g, cfg = evaluator.g, evaluator.cfg
    if not cfg.refine or cfg.max_refine_iters == 0:
        return start, [start.value]
    box = g.x_box

    def probe(x: np.ndarray):
        candidate = evaluator(x)
        return None if candidate is None else (candidate.value, candidate)

    result = pattern_search(
        probe,
        start.x,
        start.value,
        start,
        steps=box.spacing(cfg.grid),
        lower=box.lower,
        upper=box.upper,
        shrink=cfg.shrink,
        min_step=cfg.min_step,
        max_iters=cfg.max_refine_iters,
        improvement_tol=cfg.improvement_tol,
    )
    if result.moves:
        logger.info("refinement of %s accepted %d moves: %.12g", g.name, result.moves, result.value)
    return result.payload, result.trace


def _report(
    evaluator: _PointEvaluator,
    best: _Candidate,
    trace: list[float],
    grid_points: int,
    feasible: int,
    exhaustive: bool,
    rows: list,
    started: float,
) -> SolveReport:
    g = evaluator.g
    value = g.quasi_potential(best.x, best.w)
    return SolveReport(
        instance=g.name,
        mode=evaluator.mode,
        status=STATUS_REFINED if len(trace) > 1 else STATUS_OPTIMAL_ON_GRID,
        x=tuple(float(v) for v in best.x),
        w=tuple(float(v) for v in best.w),
        value=value,
        display_value=g.display(value),
        profile=lift_to_profile(best.x, best.w, g.n_leaders),
        residual=natural_map_residual(g, best.x, best.w),
        exhaustive=exhaustive and best.exhaustive,
        grid_points=grid_points,
        feasible_points=feasible,
        refinement_trace=trace,
        wall_ms=(time.perf_counter() - started) * 1000.0,
        x_names=g.x_names,
        w_names=g.w_names,
        scan_rows=rows,
    )


def _solve(g: GameInstance, cfg: Optional[SolveConfig], mode: str) -> SolveReport:
    _require_reduction(g)
    cfg = cfg or SolveConfig()
    started = time.perf_counter()
    evaluator = _PointEvaluator(g, cfg, mode)
    best, grid_points, feasible, rows, exhaustive = _scan(evaluator)
    best, trace = _refine(evaluator, best)
    return _report(evaluator, best, trace, grid_points, feasible, exhaustive, rows, started)


def solve_p_quasi(g: GameInstance, cfg: Optional[SolveConfig] = None) -> SolveReport:
    """Optimistic reduction: min over x and w in S(x) of pi(x) + h(x, w)."""
    return _solve(g, cfg, OPTIMISTIC)


def solve_p_pessimistic(g: GameInstance, cfg: Optional[SolveConfig] = None) -> SolveReport:
    """Pessimistic reduction: min over x of max over w in S(x) of pi(x) + h(x, w)."""
    return _solve(g, cfg, PESSIMISTIC)


def solve_p_implicit(g: GameInstance, cfg: Optional[SolveConfig] = None) -> SolveReport:
    """Implicit reduction: min over x of pi(x) + h(x, s(x)); raises MultivaluedDetected
    at the first probed x where S(x) has more than one member."""
    return _solve(g, cfg, IMPLICIT)


def refine_p_quasi(
    g: GameInstance,
    start: Sequence[float],
    cfg: Optional[SolveConfig] = None,
    pessimistic: bool = False,
) -> SolveReport:
    """Pattern search for a local minimiser of the reduced problem from ``start``."""
    _require_reduction(g)
    cfg = cfg or SolveConfig()
    started = time.perf_counter()
    evaluator = _PointEvaluator(g, cfg, PESSIMISTIC if pessimistic else OPTIMISTIC)
    x0 = g.x_box.clip(g.x_vector(start))
    initial = evaluator(x0)
    if initial is None:
        raise InfeasibleProblem(f"{g.name}: S(x) is empty at the start {tuple(x0)}")
    best, trace = _refine(evaluator, initial)
    return _report(evaluator, best, trace, 0, 1, initial.exhaustive, [], started)


def probe_feasible_region(g: GameInstance, grid: int, cfg: Optional[VIConfig] = None) -> CheckReport:
    """Count grid points of X where S(x) is nonempty."""
    cache = SolutionCache(g, cfg)
    points = g.x_box.grid(grid)
    sets = ordered_map(cache.get, points, cache.cfg.threads)
    feasible = [x for x, solutions in zip(points, sets) if solutions is not None]
    multivalued = sum(1 for solutions in sets if solutions is not None and len(solutions) > 1)
    logger.info("feasibility probe of %s: %d/%d grid points", g.name, len(feasible), len(points))
    return CheckReport(
        name="feasible_region",
        passed=bool(feasible),
        max_deviation=0.0,
        argmax_point=None,
        samples=len(points),
        tol=0.0,
        detail={
            "feasible_points": len(feasible),
            "multivalued_points": multivalued,
            "first_feasible": None if not feasible else [float(v) for v in feasible[0]],
        },
    )


def write_scan_csv(report: SolveReport, path: str | Path) -> None:
    """One row per probed (x, enumerated w) with its reduced objective."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([*report.x_names, *report.w_names, "objective"])
        for x, w, value in report.scan_rows:
            writer.writerow([*(repr(v) for v in x), *(repr(v) for v in w), repr(value)])
