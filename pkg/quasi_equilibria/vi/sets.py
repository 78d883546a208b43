"""Parametrised follower feasible sets K(x) and Euclidean projection onto them."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from typing import ClassVar, Optional, Union

import numpy as np

from ..errors import EmptyFeasibleSetError
from ..expr import Expr, evaluate


def _bound_value(bound: Optional[Expr], x: Mapping[str, float], unbounded: float) -> float:
    return unbounded if bound is None else evaluate(bound, x)


@dataclass(frozen=True)
class BoxSet:
    """Componentwise interval bounds; ``None`` marks an unbounded side."""

    lower: tuple[Optional[Expr], ...]
    upper: tuple[Optional[Expr], ...]
    kind: ClassVar[str] = "box"

    @property
    def dim(self) -> int:
        return len(self.lower)

    def variables(self) -> frozenset[str]:
        names: set[str] = set()
        for bound in self.lower + self.upper:
            if bound is not None:
                names |= bound.variables()
        return frozenset(names)

    def constant_bounds(self) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """Bounds as arrays when no bound depends on x, else None."""
        if self.variables():
            return None
        return self.evaluate({})

    def evaluate(self, x: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray]:
        lower = np.array([_bound_value(b, x, -np.inf) for b in self.lower], dtype=float)
        upper = np.array([_bound_value(b, x, np.inf) for b in self.upper], dtype=float)
        if np.any(lower > upper):
            k = int(np.argmax(lower > upper))
            raise EmptyFeasibleSetError(
                f"box bound {k + 1} is empty: lower {lower[k]:g} > upper {upper[k]:g}"
            )
        return lower, upper


@dataclass(frozen=True)
class BudgetSet:
    """{w >= 0, sum(w) <= b(x)}."""

    dim: int
    bound: Expr
    kind: ClassVar[str] = "budget"

    def variables(self) -> frozenset[str]:
        return self.bound.variables()

    def constant_bounds(self) -> Optional[tuple[np.ndarray, np.ndarray]]:
        if self.variables():
            return None
        b = self.evaluate({})
        return np.zeros(self.dim), np.full(self.dim, b)

    def evaluate(self, x: Mapping[str, float]) -> float:
        b = evaluate(self.bound, x)
        if b < 0:
            raise EmptyFeasibleSetError(f"budget bound {b:g} is negative")
        return b


FeasibleSetSpec = Union[BoxSet, BudgetSet]


def project_onto_budget(p: np.ndarray, budget: float) -> np.ndarray:
    """Projection onto {w >= 0, sum(w) <= budget} by the sort-and-threshold rule."""
    clamped = np.maximum(np.asarray(p, dtype=float), 0.0)
    if clamped.sum() <= budget:
        return clamped
    if budget == 0:
        return np.zeros_like(clamped)
    u = np.sort(clamped)[::-1]
    css = np.cumsum(u) - budget
    ind = np.arange(1, len(u) + 1)
    rho = ind[u - css / ind > 0][-1]
    theta = css[rho - 1] / rho
    return np.maximum(clamped - theta, 0.0)


def project(K: FeasibleSetSpec, x: Mapping[str, float], p) -> np.ndarray:
    """Euclidean projection of ``p`` onto K(x); ``x`` binds the leader variables."""
    point = np.asarray(p, dtype=float)
    if isinstance(K, BoxSet):
        lower, upper = K.evaluate(x)
        return np.minimum(np.maximum(point, lower), upper)
    return project_onto_budget(point, K.evaluate(x))
