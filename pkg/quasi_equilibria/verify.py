"""Equilibrium certification for multi-leader multi-follower games.

Every oracle here works on leader objectives directly, so per-leader coupling
(raw mode) instances are accepted. Gaps follow one sign convention: the gap
of leader i is its value at the candidate minus the best value found over
its probed deviations, so a positive gap is an available improvement. The
candidate itself is always among the deviations and gaps are never negative.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import grids, numdiff
from .errors import (
    DimensionMismatch,
    FollowerTrackingLost,
    InfeasibleCandidate,
    KinkDetected,
)
from .expr import evaluate
from .model import GameInstance, leader_objective
from .parallel import ordered_map
from .search import pattern_search
from .vi import SolutionCache, SolutionSet, VIConfig, membership

logger = logging.getLogger(__name__)

GLOBAL = "global"
PESSIMISTIC = "pessimistic"
LOCAL = "local"


class VerifyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    refine: bool = True
    shrink: float = Field(0.5, gt=0, lt=1)
    min_step: float = Field(1e-6, gt=0)
    max_refine_iters: int = Field(200, ge=0)
    improvement_tol: float = Field(1e-12, ge=0)
    threads: int = Field(1, gt=0)
    vi: VIConfig = Field(default_factory=VIConfig)


class StationarityConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    steps: tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    tol: float = Field(1e-4, gt=0)
    kink_tol: float = Field(1e-4, gt=0)
    kink_step: float = Field(1e-6, gt=0)
    tracking_factor: float = Field(10.0, gt=0)
    membership_tol: float = Field(1e-8, gt=0)
    vi: VIConfig = Field(default_factory=lambda: VIConfig(residual_tol=1e-12))

    @field_validator("steps")
    @classmethod
    def _positive_steps(cls, steps: tuple[float, ...]) -> tuple[float, ...]:
        if not steps or any(s <= 0 for s in steps):
            raise ValueError("arc steps must be positive")
        return tuple(sorted(steps, reverse=True))


def _floats(values) -> tuple[float, ...]:
    return tuple(float(v) for v in np.asarray(values, dtype=float).reshape(-1))


@dataclass
class LeaderGap:
    leader: int
    candidate_value: float
    best_value: float
    gap: float
    witness_u: tuple[float, ...]
    witness_v: tuple[float, ...]
    probes: int
    refinement_moves: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "leader": self.leader,
            "candidate_value": self.candidate_value,
            "best_value": self.best_value,
            "gap": self.gap,
            "witness": {"u": list(self.witness_u), "v": list(self.witness_v)},
            "probes": self.probes,
            "refinement_moves": self.refinement_moves,
        }


@dataclass
class VerificationReport:
    kind: str
    instance: str
    x: tuple[float, ...]
    y: tuple[tuple[float, ...], ...]
    eps: float
    leaders: list[LeaderGap]
    max_gap: float
    verdict: bool
    probes: int
    wall_ms: float
    radius: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "instance": self.instance,
            "x": list(self.x),
            "y": [list(block) for block in self.y],
            "eps": self.eps,
            "radius": self.radius,
            "leaders": [gap.to_dict() for gap in self.leaders],
            "max_gap": self.max_gap,
            "verdict": self.verdict,
            "probes": self.probes,
            "wall_ms": self.wall_ms,
        }


def _candidate(g: GameInstance, x, y, tol: float) -> tuple[np.ndarray, list[np.ndarray]]:
    x = g.x_vector(x)
    if not g.x_box.contains(x):
        raise InfeasibleCandidate(f"x={tuple(x)} lies outside the leader boxes")
    blocks = [np.asarray(block, dtype=float).reshape(-1) for block in y]
    if len(blocks) != g.n_leaders:
        raise DimensionMismatch(f"candidate has {len(blocks)} follower blocks, expected {g.n_leaders}")
    for i, block in enumerate(blocks, start=1):
        if block.size != g.follower.dim:
            raise DimensionMismatch(f"y{i} has {block.size} entries, expected {g.follower.dim}")
        if not membership(g, x, block, tol):
            raise InfeasibleCandidate(f"y{i}={tuple(block)} does not solve the follower VI at x={tuple(x)}")
    return x, blocks


def _response(g: GameInstance, i: int, x: np.ndarray, solutions: SolutionSet, pessimistic: bool):
    """Leader i's value at x over S(x): best member, or worst when pessimistic."""
    best = None
    for v in solutions:
        value = leader_objective(g, i, x, v)
        if best is None or (value > best[0] if pessimistic else value < best[0]):
            best = (value, v)
    return best


class _Deviations:
    """Scans leader i's deviations u over X_i with the others fixed at x."""

    def __init__(self, g: GameInstance, cache: SolutionCache, cfg: VerifyConfig, pessimistic: bool = False):
        self.g = g
        self.cache = cache
        self.cfg = cfg
        self.pessimistic = pessimistic
        self.probes = 0

    def at(self, x: np.ndarray, i: int, u) -> Optional[tuple[float, np.ndarray]]:
        point = self.g.with_block(x, i, u)
        solutions = self.cache.get(point)
        if solutions is None:
            return None
        return _response(self.g, i, point, solutions, self.pessimistic)

    def scan(self, x: np.ndarray, i: int, points: Sequence[np.ndarray]):
        results = ordered_map(lambda u: self.at(x, i, u), points, self.cfg.threads)
        self.probes += len(points)
        best = None
        for u, outcome in zip(points, results):
            if outcome is not None and (best is None or outcome[0] < best[0]):
                best = (outcome[0], np.asarray(u, dtype=float), outcome[1])
        return best

    def refine(self, x: np.ndarray, i: int, best, count: int):
        if best is None or not self.cfg.refine or self.cfg.max_refine_iters == 0:
            return best, 0
        box = self.g.leader(i).box

        def probe(u):
            self.probes += 1
            return self.at(x, i, u)

        result = pattern_search(
            probe,
            best[1],
            best[0],
            best[2],
            steps=box.spacing(count),
            lower=box.lower,
            upper=box.upper,
            shrink=self.cfg.shrink,
            min_step=self.cfg.min_step,
            max_iters=self.cfg.max_refine_iters,
            improvement_tol=self.cfg.improvement_tol,
        )
        return (result.value, result.x, result.payload), result.moves


def _gap(i: int, candidate_value: float, x_i, y_i, best, probes: int, moves: int = 0) -> LeaderGap:
    if best is None or candidate_value <= best[0]:
        best = (candidate_value, np.asarray(x_i, dtype=float), np.asarray(y_i, dtype=float))
    return LeaderGap(
        leader=i,
        candidate_value=candidate_value,
        best_value=float(best[0]),
        gap=float(candidate_value - best[0]),
        witness_u=_floats(best[1]),
        witness_v=_floats(best[2]),
        probes=probes,
        refinement_moves=moves,
    )


def _report(
    kind: str, g: GameInstance, x, y, eps: float, gaps: list[LeaderGap], started: float, **extra
) -> VerificationReport:
    max_gap = max(gap.gap for gap in gaps)
    report = VerificationReport(
        kind=kind,
        instance=g.name,
        x=_floats(x),
        y=tuple(_floats(block) for block in y),
        eps=eps,
        leaders=gaps,
        max_gap=max_gap,
        verdict=max_gap <= eps,
        probes=sum(gap.probes for gap in gaps),
        wall_ms=(time.perf_counter() - started) * 1000.0,
        **extra,
    )
    logger.info("%s verification of %s: max gap %.3e, verdict %s", kind, g.name, max_gap, report.verdict)
    return report


def verify_global(
    g: GameInstance,
    x,
    y,
    eps: float = 1e-9,
    grid: int = 101,
    cfg: Optional[VerifyConfig] = None,
    cache: Optional[SolutionCache] = None,
) -> VerificationReport:
    """epsilon-global equilibrium check over a deviation grid on each X_i plus pattern search."""
    cfg = cfg or VerifyConfig()
    started = time.perf_counter()
    x, y = _candidate(g, x, y, cfg.vi.residual_tol)
    deviations = _Deviations(g, cache or SolutionCache(g, cfg.vi), cfg)
    gaps = []
    for i in range(1, g.n_leaders + 1):
        deviations.probes = 0
        best = deviations.scan(x, i, g.leader(i).box.grid(grid))
        best, moves = deviations.refine(x, i, best, grid)
        value = leader_objective(g, i, x, y[i - 1])
        gaps.append(_gap(i, value, x[g.block(i)], y[i - 1], best, deviations.probes, moves))
    return _report(GLOBAL, g, x, y, eps, gaps, started)


def verify_pessimistic(
    g: GameInstance,
    x,
    y,
    eps: float = 1e-9,
    grid: int = 101,
    cfg: Optional[VerifyConfig] = None,
    cache: Optional[SolutionCache] = None,
) -> VerificationReport:
    """Pessimistic equilibrium check: every leader guards against the worst member of S."""
    cfg = cfg or VerifyConfig()
    started = time.perf_counter()
    x, y = _candidate(g, x, y, cfg.vi.residual_tol)
    cache = cache or SolutionCache(g, cfg.vi)
    at_x = cache.get(x)
    if at_x is None:
        raise InfeasibleCandidate(f"no follower solution found at x={tuple(x)}")
    deviations = _Deviations(g, cache, cfg, pessimistic=True)
    gaps = []
    for i in range(1, g.n_leaders + 1):
        deviations.probes = 0
        best = deviations.scan(x, i, g.leader(i).box.grid(grid))
        best, moves = deviations.refine(x, i, best, grid)
        value, worst = _response(g, i, x, at_x, pessimistic=True)
        gaps.append(_gap(i, value, x[g.block(i)], worst, best, deviations.probes, moves))
    return _report(PESSIMISTIC, g, x, y, eps, gaps, started)


def verify_local(
    g: GameInstance,
    x,
    y,
    radius: float = 0.05,
    eps: float = 1e-6,
    samples: int = 11,
    cfg: Optional[VerifyConfig] = None,
    cache: Optional[SolutionCache] = None,
) -> VerificationReport:
    """Local equilibrium check on the joint sup-norm ball of (u_i, v_i) around (x_i, y_i)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    cfg = cfg or VerifyConfig()
    started = time.perf_counter()
    x, y = _candidate(g, x, y, cfg.vi.residual_tol)
    cache = cache or SolutionCache(g, cfg.vi)
    gaps = []
    for i in range(1, g.n_leaders + 1):
        leader = g.leader(i)
        x_i, y_i = x[g.block(i)], y[i - 1]
        points = grids.ball_grid(x_i, radius, leader.box.lower, leader.box.upper, samples)
        best = None
        for u in points:
            point = g.with_block(x, i, u)
            solutions = cache.get(point)
            if solutions is None:
                continue
            for v in solutions:
                distance = max(np.max(np.abs(u - x_i)), np.max(np.abs(v - y_i)) if v.size else 0.0)
                if distance > radius:
                    continue
                value = leader_objective(g, i, point, v)
                if best is None or value < best[0]:
                    best = (value, np.asarray(u, dtype=float), v)
        value = leader_objective(g, i, x, y_i)
        gaps.append(_gap(i, value, x_i, y_i, best, len(points)))
    return _report(LOCAL, g, x, y, eps, gaps, started, radius=radius)


# --- nonexistence certificate --------------------------------------------------


@dataclass
class NonexistenceReport:
    instance: str
    grid: int
    eps: float
    delta_star: float
    argmin_x: Optional[tuple[float, ...]]
    argmin_y: Optional[tuple[tuple[float, ...], ...]]
    argmin_gaps: list[float]
    candidates: int
    grid_points: int
    feasible_points: int
    wall_ms: float
    x_names: tuple[str, ...] = ()
    rows: list[tuple[tuple[float, ...], tuple[tuple[float, ...], ...], float]] = field(
        default_factory=list, repr=False
    )

    @property
    def exists_on_grid(self) -> bool:
        return self.candidates > 0 and self.delta_star <= self.eps

    @property
    def statement(self) -> str:
        if self.candidates == 0:
            return "no grid point admits a follower solution; there are no candidates"
        if self.exists_on_grid:
            return f"a grid candidate is a {self.eps:g}-equilibrium against grid deviations"
        return (
            f"no epsilon-equilibrium exists among grid candidates for epsilon < {self.delta_star:.12g} "
            f"(grid of {self.grid} points per dimension)"
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance": self.instance,
            "grid": self.grid,
            "eps": self.eps,
            "delta_star": self.delta_star if math.isfinite(self.delta_star) else None,
            "argmin": None
            if self.argmin_x is None
            else {"x": list(self.argmin_x), "y": [list(b) for b in self.argmin_y], "gaps": self.argmin_gaps},
            "candidates": self.candidates,
            "grid_points": self.grid_points,
            "feasible_points": self.feasible_points,
            "exists_on_grid": self.exists_on_grid,
            "statement": self.statement,
            "wall_ms": self.wall_ms,
        }


def certify_nonexistence_on_grid(
    g: GameInstance,
    grid: int = 21,
    eps: float = 1e-9,
    cfg: Optional[VerifyConfig] = None,
) -> NonexistenceReport:
    """Smallest max-gap over all grid candidates (x, y) with every y_i in S(x).

    Deviations are the same grid, without refinement, so the result is a
    statement about the grid alone. Leader i's best deviation value does not
    depend on y, so it is computed once per grid point.
    """
    cfg = cfg or VerifyConfig()
    started = time.perf_counter()
    cache = SolutionCache(g, cfg.vi)
    serial = cfg.model_copy(update={"threads": 1})
    points = g.x_box.grid(grid)

    def candidates_at(x: np.ndarray):
        solutions = cache.get(x)
        if solutions is None:
            return None
        deviations = _Deviations(g, cache, serial)
        bests = [deviations.scan(x, i, g.leader(i).box.grid(grid)) for i in range(1, g.n_leaders + 1)]
        rows = []
        for profile in itertools.product(list(solutions), repeat=g.n_leaders):
            gaps = []
            for i, y_i in enumerate(profile, start=1):
                value = leader_objective(g, i, x, y_i)
                best = bests[i - 1]
                gaps.append(0.0 if best is None else max(0.0, value - best[0]))
            rows.append((profile, gaps))
        return rows

    results = ordered_map(candidates_at, points, cfg.threads)
    delta, argmin, rows, feasible = math.inf, None, [], 0
    for x, outcome in zip(points, results):
        if outcome is None:
            continue
        feasible += 1
        for profile, gaps in outcome:
            worst = max(gaps)
            rows.append((_floats(x), tuple(_floats(b) for b in profile), worst))
            if worst < delta:
                delta, argmin = worst, (x, profile, gaps)
    report = NonexistenceReport(
        instance=g.name,
        grid=grid,
        eps=eps,
        delta_star=delta,
        argmin_x=None if argmin is None else _floats(argmin[0]),
        argmin_y=None if argmin is None else tuple(_floats(b) for b in argmin[1]),
        argmin_gaps=[] if argmin is None else [float(v) for v in argmin[2]],
        candidates=len(rows),
        grid_points=len(points),
        feasible_points=feasible,
        wall_ms=(time.perf_counter() - started) * 1000.0,
        x_names=g.x_names,
        rows=rows,
    )
    logger.info(
        "nonexistence certificate for %s: delta* = %.12g over %d candidates", g.name, delta, len(rows)
    )
    return report


def write_nonexistence_csv(report: NonexistenceReport, path: str | Path, follower_dim: int = 1) -> None:
    n_leaders = len(report.rows[0][1]) if report.rows else 0
    y_names = [
        f"y{i}" if follower_dim == 1 else f"y{i}_{j}"
        for i in range(1, n_leaders + 1)
        for j in range(1, follower_dim + 1)
    ]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([*report.x_names, *y_names, "max_gap"])
        for x, profile, worst in report.rows:
            y_values = (repr(v) for block in profile for v in block)
            writer.writerow([*(repr(v) for v in x), *y_values, repr(worst)])


# --- Nash B-stationarity --------------------------------------------------------


@dataclass
class ArcSample:
    leader: int
    variable: str
    direction: int
    quotients: list[tuple[float, float]]

    @property
    def estimate(self) -> float:
        # Smallest step dominates.
        return self.quotients[-1][1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "leader": self.leader,
            "variable": self.variable,
            "direction": self.direction,
            "quotients": [{"tau": tau, "quotient": q} for tau, q in self.quotients],
            "estimate": self.estimate,
        }


@dataclass
class StationarityReport:
    instance: str
    x: tuple[float, ...]
    y: tuple[tuple[float, ...], ...]
    arcs: list[ArcSample]
    min_quotient: float
    tol: float
    verdict: bool
    approximate: bool
    wall_ms: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance": self.instance,
            "x": list(self.x),
            "y": [list(block) for block in self.y],
            "arcs": [arc.to_dict() for arc in self.arcs],
            "min_quotient": self.min_quotient if math.isfinite(self.min_quotient) else None,
            "tol": self.tol,
            "verdict": self.verdict,
            "approximate": self.approximate,
            "wall_ms": self.wall_ms,
        }


def _check_kinks(g: GameInstance, i: int, x: np.ndarray, y_i: np.ndarray, cfg: StationarityConfig) -> None:
    names = g.x_names + g.w_names
    leader = g.leader(i)
    coupling = g.coupling(i)

    def objective(z: np.ndarray) -> float:
        env = dict(zip(names, (float(v) for v in z)))
        return evaluate(leader.phi, env) + evaluate(coupling, env)

    point = np.concatenate([x, y_i])
    block = g.block(i)
    indices = list(range(block.start, block.stop)) + list(range(g.x_dim, g.x_dim + g.follower.dim))
    for k in indices:
        backward, forward = numdiff.one_sided_slopes(objective, point, k, cfg.kink_step)
        if abs(forward - backward) > cfg.kink_tol:
            raise KinkDetected(i, names[k], forward, backward)


def check_nash_b_stationarity(
    g: GameInstance,
    x,
    y,
    cfg: Optional[StationarityConfig] = None,
) -> StationarityReport:
    """Directional quotients of each leader's objective along feasible arcs.

    Leader i moves one coordinate of x_i by +-tau into X_i; the follower is
    re-solved there and the branch nearest to y_i is tracked. The verdict is
    true when no arc's smallest-step quotient falls below ``-tol``.
    """
    cfg = cfg or StationarityConfig()
    started = time.perf_counter()
    x, y = _candidate(g, x, y, cfg.membership_tol)
    cache = SolutionCache(g, cfg.vi)
    at_x = cache.get(x)
    if at_x is None:
        raise InfeasibleCandidate(f"no follower solution found at x={tuple(x)}")

    arcs: list[ArcSample] = []
    for i in range(1, g.n_leaders + 1):
        _check_kinks(g, i, x, y[i - 1], cfg)
        base_w, _ = at_x.nearest(y[i - 1])
        base = leader_objective(g, i, x, base_w)
        box = g.leader(i).box
        for offset, k in enumerate(range(g.block(i).start, g.block(i).stop)):
            for direction in (1, -1):
                quotients = []
                for tau in cfg.steps:
                    u = x[k] + direction * tau
                    if u < box.lower[offset] or u > box.upper[offset]:
                        continue
                    point = x.copy()
                    point[k] = u
                    solutions = cache.get(point)
                    if solutions is None:
                        raise FollowerTrackingLost(i, tau, math.inf)
                    w, distance = solutions.nearest(y[i - 1])
                    if distance > cfg.tracking_factor * tau:
                        raise FollowerTrackingLost(i, tau, distance)
                    quotients.append((tau, (leader_objective(g, i, point, w) - base) / tau))
                if quotients:
                    arcs.append(ArcSample(i, g.x_names[k], direction, quotients))

    min_quotient = min((arc.estimate for arc in arcs), default=math.inf)
    report = StationarityReport(
        instance=g.name,
        x=_floats(x),
        y=tuple(_floats(block) for block in y),
        arcs=arcs,
        min_quotient=min_quotient,
        tol=cfg.tol,
        verdict=min_quotient >= -cfg.tol,
        approximate=len(at_x) > 1,
        wall_ms=(time.perf_counter() - started) * 1000.0,
    )
    logger.info("B-stationarity of %s: min quotient %.3e over %d arcs", g.name, min_quotient, len(arcs))
    return report
