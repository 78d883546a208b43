"""Multi-leader multi-follower game instances.

Leader i minimises ``phi_i(x) + h(x, y_i)`` over ``x_i in X_i`` with
``y_i in S(x)``, the solution set of the follower VI. Quasi-potential
instances share one ``h``; raw-mode instances carry a per-leader coupling
``h_i`` and exist only so non-quasi-potential games can be verified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import grids
from ..errors import DimensionMismatch, InvariantViolation
from ..expr import Expr, evaluate
from ..vi.sets import FeasibleSetSpec


def leader_variable_names(leader_id: int, dim: int) -> tuple[str, ...]:
    if dim == 1:
        return (f"x{leader_id}",)
    return tuple(f"x{leader_id}_{k}" for k in range(1, dim + 1))


def follower_variable_names(dim: int) -> tuple[str, ...]:
    if dim == 1:
        return ("w",)
    return tuple(f"w_{j}" for j in range(1, dim + 1))


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(self.lower) != len(self.upper):
            raise InvariantViolation("box lower and upper bounds differ in length")
        if self.labels and len(self.labels) != len(self.lower):
            raise InvariantViolation("box labels do not match its dimension")
        for k, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise InvariantViolation(f"box dimension {k + 1} is not compact ({lo}, {hi})")
            if lo > hi:
                raise InvariantViolation(f"box dimension {k + 1} is empty ({lo} > {hi})")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, point: Sequence[float], tol: float = 1e-12) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= np.asarray(self.lower) - tol) and np.all(p <= np.asarray(self.upper) + tol))

    def clip(self, point: Sequence[float]) -> np.ndarray:
        return np.clip(np.asarray(point, dtype=float), self.lower, self.upper)

    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    def grid(self, count: int) -> list[np.ndarray]:
        return grids.product_grid(self.lower, self.upper, count)

    def spacing(self, count: int) -> np.ndarray:
        return np.array([grids.spacing(lo, hi, count) for lo, hi in zip(self.lower, self.upper)])


@dataclass(frozen=True)
class LeaderSpec:
    id: int
    dim: int
    box: Box
    phi: Expr

    @property
    def names(self) -> tuple[str, ...]:
        return leader_variable_names(self.id, self.dim)


@dataclass(frozen=True)
class FollowerSpec:
    dim: int
    G: tuple[Expr, ...]
    K: FeasibleSetSpec
    search: Box

    @property
    def names(self) -> tuple[str, ...]:
        return follower_variable_names(self.dim)


@dataclass(frozen=True)
class GameInstance:
    name: str
    leaders: tuple[LeaderSpec, ...]
    follower: FollowerSpec
    h: Optional[Expr] = None
    pi: Optional[Expr] = None
    raw_h: Optional[tuple[Expr, ...]] = None
    sense: str = "min"
    _offsets: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        offsets, start = [], 0
        for leader in self.leaders:
            offsets.append(start)
            start += leader.dim
        object.__setattr__(self, "_offsets", tuple(offsets))

    @property
    def is_raw(self) -> bool:
        return self.raw_h is not None

    @property
    def n_leaders(self) -> int:
        return len(self.leaders)

    @property
    def x_dim(self) -> int:
        return sum(leader.dim for leader in self.leaders)

    @property
    def x_names(self) -> tuple[str, ...]:
        return tuple(name for leader in self.leaders for name in leader.names)

    @property
    def w_names(self) -> tuple[str, ...]:
        return self.follower.names

    @property
    def x_box(self) -> Box:
        return Box(
            lower=tuple(v for leader in self.leaders for v in leader.box.lower),
            upper=tuple(v for leader in self.leaders for v in leader.box.upper),
            labels=self.x_names,
        )

    def leader(self, i: int) -> LeaderSpec:
        if not 1 <= i <= self.n_leaders:
            raise DimensionMismatch(f"leader {i} does not exist (instance has {self.n_leaders})")
        return self.leaders[i - 1]

    def block(self, i: int) -> slice:
        leader = self.leader(i)
        start = self._offsets[i - 1]
        return slice(start, start + leader.dim)

    def coupling(self, i: int) -> Expr:
        if self.raw_h is not None:
            return self.raw_h[i - 1]
        return self.h

    def x_vector(self, x) -> np.ndarray:
        point = np.asarray(x, dtype=float).reshape(-1)
        if point.size != self.x_dim:
            raise DimensionMismatch(f"leader profile has {point.size} entries, expected {self.x_dim}")
        return point

    def x_env(self, x) -> dict[str, float]:
        return dict(zip(self.x_names, (float(v) for v in self.x_vector(x))))

    def env(self, x, w) -> dict[str, float]:
        point = np.asarray(w, dtype=float).reshape(-1)
        if point.size != self.follower.dim:
            raise DimensionMismatch(f"follower point has {point.size} entries, expected {self.follower.dim}")
        values = self.x_env(x)
        values.update(zip(self.w_names, (float(v) for v in point)))
        return values

    def with_block(self, x, i: int, u) -> np.ndarray:
        """Copy of ``x`` with leader ``i``'s block replaced by ``u``."""
        point = self.x_vector(x).copy()
        point[self.block(i)] = np.asarray(u, dtype=float).reshape(-1)
        return point

    def quasi_potential(self, x, w) -> float:
        """pi(x) + h(x, w)."""
        env = self.env(x, w)
        return evaluate(self.pi, env) + evaluate(self.h, env)

    def display(self, value: float) -> float:
        """Value in the instance's original sign convention."""
        return -value if self.sense == "max" else value


def leader_objective(g: GameInstance, i: int, x, w) -> float:
    env = g.env(x, w)
    return evaluate(g.leader(i).phi, env) + evaluate(g.coupling(i), env)
