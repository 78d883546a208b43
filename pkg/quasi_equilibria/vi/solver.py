"""Follower variational inequality VI(G(x, .), K(x)).

Solutions are zeros of the natural map ``w - proj_K(x)(w - G(w; x))``. The
solution set S(x) may be multivalued; it is approximated by multistart
projection iterations from a stratified grid over the follower search box,
clustered into a finite :class:`SolutionSet`.
"""

from __future__ import annotations

import logging
import threading
from collections.abc import Mapping
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Callable, Iterator, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .. import grids
from ..errors import (
    DimensionMismatch,
    EmptySolutionSet,
    ExprError,
    NotConverged,
    QuasiEquilibriaError,
)
from ..expr import evaluate
from ..parallel import ordered_map
from .sets import BoxSet, FeasibleSetSpec, project_onto_budget

if TYPE_CHECKING:
    from ..model import GameInstance

logger = logging.getLogger(__name__)

_MIN_STEP = 1e-12


class VIConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    residual_tol: float = Field(1e-8, gt=0)
    step: float = Field(0.5, gt=0)
    max_iters: int = Field(10_000, gt=0)
    multistart: int = Field(17, gt=0)
    cluster_tol: float = Field(1e-6, gt=0)
    stall_window: int = Field(50, gt=0)
    max_starts: int = Field(64, gt=1)
    settle_after: int = Field(6, ge=0)
    threads: int = Field(1, gt=0)


@dataclass(frozen=True)
class SolutionSet:
    """Finite approximation of S(x): clustered solutions sorted lexicographically."""

    x: tuple[float, ...]
    solutions: tuple[tuple[float, ...], ...]
    residuals: tuple[float, ...]
    cluster_tol: float
    exhaustive: bool
    starts: int = 0
    visited: int = 0
    failures: int = 0

    def __len__(self) -> int:
        return len(self.solutions)

    def __iter__(self) -> Iterator[np.ndarray]:
        for w in self.solutions:
            yield np.array(w, dtype=float)

    def nearest(self, y: Sequence[float]) -> tuple[np.ndarray, float]:
        """Member closest to ``y`` in the sup norm (first one on ties)."""
        target = np.asarray(y, dtype=float)
        best, best_distance = None, np.inf
        for w in self:
            distance = float(np.max(np.abs(w - target))) if w.size else 0.0
            if distance < best_distance:
                best, best_distance = w, distance
        return best, best_distance

    def to_dict(self) -> dict[str, Any]:
        return {
            "x": list(self.x),
            "solutions": [list(w) for w in self.solutions],
            "residuals": list(self.residuals),
            "cluster_tol": self.cluster_tol,
            "exhaustive": self.exhaustive,
            "starts": self.starts,
            "visited": self.visited,
            "failures": self.failures,
        }


def _projector(K: FeasibleSetSpec, x_env: Mapping[str, float]) -> Callable[[np.ndarray], np.ndarray]:
    # K(x) is fixed for a given x; evaluate its bounds once per solve.
    if isinstance(K, BoxSet):
        lower, upper = K.evaluate(x_env)
        return lambda p: np.minimum(np.maximum(p, lower), upper)
    budget = K.evaluate(x_env)
    return lambda p: project_onto_budget(p, budget)


def _map_values(g: "GameInstance", x_env: Mapping[str, float], w: np.ndarray) -> np.ndarray:
    env = dict(x_env)
    env.update(zip(g.w_names, (float(v) for v in w)))
    return np.array([evaluate(component, env) for component in g.follower.G], dtype=float)


def _residual(proj: Callable[[np.ndarray], np.ndarray], w: np.ndarray, gw: np.ndarray) -> float:
    return float(np.max(np.abs(w - proj(w - gw)))) if w.size else 0.0


def _follower_point(g: "GameInstance", w) -> np.ndarray:
    point = np.asarray(w, dtype=float).reshape(-1)
    if point.size != g.follower.dim:
        raise DimensionMismatch(f"follower point has {point.size} entries, expected {g.follower.dim}")
    return point


def natural_map_residual(g: "GameInstance", x, w) -> float:
    x_env = g.x_env(x)
    point = _follower_point(g, w)
    proj = _projector(g.follower.K, x_env)
    return _residual(proj, point, _map_values(g, x_env, point))


def solve_vi_from(g: "GameInstance", x, start, cfg: Optional[VIConfig] = None) -> np.ndarray:
    """Projection iteration from ``start``; switches to extragradient on stagnation.

    Raises NotConverged (carrying the best residual seen) after ``max_iters``.
    """
    cfg = cfg or VIConfig()
    x_env = g.x_env(x)
    proj = _projector(g.follower.K, x_env)

    w = _follower_point(g, start)
    gw = _map_values(g, x_env, w)
    r = _residual(proj, w, gw)
    if r <= cfg.residual_tol:
        return w
    best_r, best_w = r, w
    gamma = cfg.step
    extragradient = False
    stall = 0
    for iteration in range(cfg.max_iters):
        if extragradient:
            half = proj(w - gamma * gw)
            w_new = proj(w - gamma * _map_values(g, x_env, half))
        else:
            w_new = proj(w - gamma * gw)
        gw_new = _map_values(g, x_env, w_new)
        r_new = _residual(proj, w_new, gw_new)
        if r_new <= cfg.residual_tol:
            logger.debug("VI converged after %d iterations (residual %.3e)", iteration + 1, r_new)
            return w_new
        if r_new < best_r:
            best_r, best_w, stall = r_new, w_new, 0
        else:
            stall += 1
        if extragradient:
            if r_new >= r:
                gamma = max(0.5 * gamma, _MIN_STEP)
        elif stall >= cfg.stall_window:
            logger.debug("fixed-point iteration stalled at residual %.3e; switching to extragradient", best_r)
            extragradient = True
            stall = 0
        w, gw, r = w_new, gw_new, r_new
    raise NotConverged(best_r, best_w)


def _cluster(candidates: list[tuple[float, np.ndarray]], tol: float) -> list[tuple[float, np.ndarray]]:
    representatives: list[tuple[float, np.ndarray]] = []
    for residual, w in sorted(candidates, key=lambda c: (c[0], tuple(c[1]))):
        if all(np.max(np.abs(w - rep)) > tol for _, rep in representatives):
            representatives.append((residual, w))
    return sorted(representatives, key=lambda c: tuple(c[1]))


def _start_axes(g: "GameInstance", cfg: VIConfig) -> list[np.ndarray]:
    search = g.follower.search
    count = cfg.multistart
    dim = len(search.lower)
    if dim > 1:
        per_axis = int(np.floor(cfg.max_starts ** (1.0 / dim) + 1e-9))
        count = min(count, max(2, per_axis))
    return grids.tensor_axes(search.lower, search.upper, count)


def _natural_map(g: "GameInstance", x_env: Mapping[str, float], proj, w: np.ndarray) -> Optional[np.ndarray]:
    try:
        return w - proj(w - _map_values(g, x_env, w))
    except ExprError:
        return None


def _unexplained_sign_change(
    axes: Sequence[np.ndarray],
    values: Mapping[tuple[int, ...], Optional[np.ndarray]],
    members: Sequence[np.ndarray],
    cfg: VIConfig,
) -> bool:
    """True when natural-map component d flips sign between two starts adjacent
    along axis d and no member has its coordinate d between them."""
    for idx, value in values.items():
        if value is None:
            continue
        for d, points in enumerate(axes):
            if idx[d] + 1 >= len(points):
                continue
            following = values[idx[:d] + (idx[d] + 1,) + idx[d + 1 :]]
            if following is None or value[d] * following[d] >= 0:
                continue
            if min(abs(value[d]), abs(following[d])) <= cfg.residual_tol:
                continue
            lo, hi = points[idx[d]] - cfg.cluster_tol, points[idx[d] + 1] + cfg.cluster_tol
            if not any(lo <= w[d] <= hi for w in members):
                logger.debug("natural map changes sign on axis %d between %g and %g", d, lo, hi)
                return True
    return False


def enumerate_solutions(g: "GameInstance", x, cfg: Optional[VIConfig] = None) -> SolutionSet:
    """Multistart enumeration of S(x) over the follower search box.

    Starts come from a tensor grid over the search box, ``multistart`` points
    per axis but at most ``max_starts`` in total when the follower has more
    than one dimension. They are visited coarse to fine (box corners, then
    repeated midpoints) and the visit stops once ``settle_after`` consecutive
    converged starts add no new member. Every start is first tested directly
    by its residual (inside :func:`solve_vi_from`), so grid points that
    already solve the VI are kept even when the iteration would be repelled
    from them.

    ``exhaustive`` is a heuristic flag: false when a visited start failed or
    when the natural map changes sign between neighbouring starts with no
    member in between.
    """
    cfg = cfg or VIConfig()
    axes = _start_axes(g, cfg)
    order = grids.coarse_to_fine([len(a) for a in axes])

    def start_at(idx: tuple[int, ...]) -> np.ndarray:
        return np.array([axes[d][i] for d, i in enumerate(idx)], dtype=float)

    def run(idx: tuple[int, ...]) -> Optional[np.ndarray]:
        try:
            return solve_vi_from(g, x, start_at(idx), cfg)
        except (NotConverged, ExprError) as exc:
            logger.debug("start %s failed: %s", tuple(start_at(idx)), exc)
            return None

    results: list[np.ndarray] = []
    found: list[np.ndarray] = []
    visited = failures = streak = 0
    batch = max(1, cfg.threads)
    while visited < len(order) and not (cfg.settle_after and streak >= cfg.settle_after):
        chunk = order[visited : visited + batch]
        for w in ordered_map(run, chunk, cfg.threads):
            if cfg.settle_after and streak >= cfg.settle_after:
                break
            visited += 1
            if w is None:
                failures += 1
                continue
            results.append(w)
            if any(np.max(np.abs(w - member)) <= cfg.cluster_tol for member in found):
                streak += 1
            else:
                found.append(w)
                streak = 0
    if visited < len(order):
        logger.debug("enumeration settled after %d of %d starts", visited, len(order))

    if not results:
        raise EmptySolutionSet(np.asarray(x, dtype=float))
    candidates = [(natural_map_residual(g, x, w), w) for w in results]
    clustered = _cluster(candidates, cfg.cluster_tol)

    exhaustive = failures == 0
    if exhaustive:
        x_env = g.x_env(x)
        proj = _projector(g.follower.K, x_env)
        values = {idx: _natural_map(g, x_env, proj, start_at(idx)) for idx in order}
        exhaustive = not _unexplained_sign_change(axes, values, [w for _, w in clustered], cfg)
    return SolutionSet(
        x=tuple(float(v) for v in np.asarray(x, dtype=float)),
        solutions=tuple(tuple(float(v) for v in w) for _, w in clustered),
        residuals=tuple(r for r, _ in clustered),
        cluster_tol=cfg.cluster_tol,
        exhaustive=exhaustive,
        starts=len(order),
        visited=visited,
        failures=failures,
    )


def membership(g: "GameInstance", x, w, tol: float) -> bool:
    if tol == np.inf:
        return True
    try:
        return natural_map_residual(g, x, w) <= tol
    except QuasiEquilibriaError:
        return False


class SolutionCache:
    """Memoised :func:`enumerate_solutions`; empty sets are cached as ``None``."""

    def __init__(self, g: "GameInstance", cfg: Optional[VIConfig] = None) -> None:
        self.g = g
        self.cfg = cfg or VIConfig()
        self._sets: dict[tuple[float, ...], Optional[SolutionSet]] = {}
        self._lock = threading.Lock()

    def get(self, x) -> Optional[SolutionSet]:
        key = tuple(float(v) for v in np.asarray(x, dtype=float))
        with self._lock:
            if key in self._sets:
                return self._sets[key]
        try:
            solutions: Optional[SolutionSet] = enumerate_solutions(self.g, key, self.cfg)
        except EmptySolutionSet:
            solutions = None
        with self._lock:
            self._sets.setdefault(key, solutions)
        return solutions

    def __len__(self) -> int:
        return len(self._sets)
