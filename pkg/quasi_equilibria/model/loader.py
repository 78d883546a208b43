"""Instance JSON ingestion, validation and serialisation.

Schema::

    {
      "name": str,
      "sense": "min" | "max",                      (optional, default "min")
      "leaders": [{"id", "dim", "lower": [], "upper": [], "phi": str}],
      "h": str            | "raw_h": [str, ...],   (exactly one)
      "pi": str,                                   (optional)
      "follower": {
        "dim": int,
        "G": [str, ...],
        "K": {"kind": "box", "lower": [...], "upper": [...]}
           | {"kind": "budget", "bound": str},
        "search_lower": [...], "search_upper": [...]   (optional when K is constant and finite)
      }
    }

Box bounds of K may be numbers, expressions over x, or null for unbounded.
"""

from __future__ import annotations

import json
import logging
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ExprError, InvariantViolation, SchemaError
from ..expr import KINK_CALLS, Expr, as_expr
from ..vi.sets import BoxSet, BudgetSet, FeasibleSetSpec
from .instance import (
    Box,
    FollowerSpec,
    GameInstance,
    LeaderSpec,
    follower_variable_names,
    leader_variable_names,
)

logger = logging.getLogger(__name__)

# K bounds are checked for nonemptiness on this many points per leader dimension.
_K_CHECK_POINTS = 3

Bound = Union[float, str, None]


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LeaderDocument(_Document):
    id: int = Field(ge=1)
    dim: int = Field(ge=1)
    lower: list[float]
    upper: list[float]
    phi: str


class BoxSetDocument(_Document):
    kind: Literal["box"]
    lower: list[Bound]
    upper: list[Bound]


class BudgetSetDocument(_Document):
    kind: Literal["budget"]
    bound: Union[float, str]


class FollowerDocument(_Document):
    dim: int = Field(ge=1)
    G: list[str]
    K: Annotated[Union[BoxSetDocument, BudgetSetDocument], Field(discriminator="kind")]
    search_lower: Optional[list[float]] = None
    search_upper: Optional[list[float]] = None


class InstanceDocument(_Document):
    name: str
    sense: Literal["min", "max"] = "min"
    leaders: list[LeaderDocument] = Field(min_length=1)
    h: Optional[str] = None
    raw_h: Optional[list[str]] = None
    pi: Optional[str] = None
    follower: FollowerDocument

    @model_validator(mode="after")
    def _one_coupling(self) -> "InstanceDocument":
        if (self.h is None) == (self.raw_h is None):
            raise ValueError("exactly one of 'h' and 'raw_h' is required")
        return self


def _parse(text: Any, where: str) -> Expr:
    try:
        return as_expr(text)
    except ExprError as exc:
        exc.add_note(f"in field {where}")
        raise


def _check_names(
    e: Expr, allowed: frozenset[str], where: str, forbidden: frozenset[str] = frozenset()
) -> None:
    bad = sorted(e.variables() & forbidden)
    if bad:
        raise InvariantViolation(f"{where} references follower variable(s) {', '.join(bad)}")
    unknown = sorted(e.variables() - allowed)
    if unknown:
        raise InvariantViolation(f"{where} references unknown variable(s) {', '.join(unknown)}")


def _check_smooth(e: Expr, where: str) -> None:
    kinks = sorted(e.calls() & KINK_CALLS)
    if kinks:
        raise InvariantViolation(f"{where} must be smooth but uses {', '.join(kinks)}")


def _bound(value: Bound, where: str) -> Optional[Expr]:
    return None if value is None else _parse(value, where)


def _feasible_set(doc: FollowerDocument, x_names: frozenset[str]) -> FeasibleSetSpec:
    K = doc.K
    if isinstance(K, BoxSetDocument):
        if len(K.lower) != doc.dim or len(K.upper) != doc.dim:
            raise InvariantViolation("follower K bounds do not match the follower dimension")
        lower = tuple(_bound(b, f"follower.K.lower[{k}]") for k, b in enumerate(K.lower))
        upper = tuple(_bound(b, f"follower.K.upper[{k}]") for k, b in enumerate(K.upper))
        spec: FeasibleSetSpec = BoxSet(lower=lower, upper=upper)
    else:
        spec = BudgetSet(dim=doc.dim, bound=_parse(K.bound, "follower.K.bound"))
    _check_names_all(spec, x_names)
    return spec


def _check_names_all(spec: FeasibleSetSpec, x_names: frozenset[str]) -> None:
    unknown = sorted(spec.variables() - x_names)
    if unknown:
        raise InvariantViolation(f"follower K bounds reference unknown variable(s) {', '.join(unknown)}")


def _search_box(doc: FollowerDocument, spec: FeasibleSetSpec, w_names: tuple[str, ...]) -> Box:
    constant = spec.constant_bounds()
    if doc.search_lower is None or doc.search_upper is None:
        if constant is None or not (np.all(np.isfinite(constant[0])) and np.all(np.isfinite(constant[1]))):
            raise InvariantViolation("follower search box is required when K is not constant and finite")
        return Box(tuple(constant[0]), tuple(constant[1]), w_names)
    if len(doc.search_lower) != doc.dim or len(doc.search_upper) != doc.dim:
        raise InvariantViolation("follower search box does not match the follower dimension")
    search = Box(tuple(doc.search_lower), tuple(doc.search_upper), w_names)
    if constant is not None:
        lower, upper = constant
        finite_lo, finite_hi = np.isfinite(lower), np.isfinite(upper)
        if np.any(np.asarray(search.lower)[finite_lo] > lower[finite_lo]) or np.any(
            np.asarray(search.upper)[finite_hi] < upper[finite_hi]
        ):
            raise InvariantViolation("follower search box does not cover K")
    return search


def _check_k_nonempty(g: GameInstance) -> None:
    K = g.follower.K
    points = g.x_box.grid(_K_CHECK_POINTS) if K.variables() else [g.x_box.midpoint()]
    for x in points:
        try:
            bound = K.evaluate(g.x_env(x))
        except Exception as exc:
            raise InvariantViolation(f"follower K is invalid at x={tuple(x)}: {exc}") from exc
        if isinstance(K, BudgetSet) and bound <= 0:
            raise InvariantViolation(f"budget bound must be positive on X; got {bound:g} at x={tuple(x)}")


def instance_from_document(doc: InstanceDocument) -> GameInstance:
    leaders_doc = sorted(doc.leaders, key=lambda leader: leader.id)
    if [leader.id for leader in leaders_doc] != list(range(1, len(leaders_doc) + 1)):
        raise InvariantViolation("leader ids must be 1..N")

    x_names = frozenset(
        name for leader in leaders_doc for name in leader_variable_names(leader.id, leader.dim)
    )
    follower_doc = doc.follower
    w_names = follower_variable_names(follower_doc.dim)
    w_set = frozenset(w_names)

    leaders = []
    for leader in leaders_doc:
        if len(leader.lower) != leader.dim or len(leader.upper) != leader.dim:
            raise InvariantViolation(f"leader {leader.id} box does not match its dimension")
        where = f"leaders[{leader.id}].phi"
        phi = _parse(leader.phi, where)
        _check_names(phi, x_names, where, forbidden=w_set)
        _check_smooth(phi, where)
        box = Box(tuple(leader.lower), tuple(leader.upper), leader_variable_names(leader.id, leader.dim))
        leaders.append(LeaderSpec(id=leader.id, dim=leader.dim, box=box, phi=phi))

    h = raw_h = None
    if doc.h is not None:
        h = _parse(doc.h, "h")
        _check_names(h, x_names | w_set, "h")
    else:
        if len(doc.raw_h) != len(leaders):
            raise InvariantViolation("raw_h needs one coupling term per leader")
        raw_h = tuple(_parse(text, f"raw_h[{k}]") for k, text in enumerate(doc.raw_h))
        for k, term in enumerate(raw_h):
            _check_names(term, x_names | w_set, f"raw_h[{k}]")

    pi = None
    if doc.pi is not None:
        pi = _parse(doc.pi, "pi")
        _check_names(pi, x_names, "pi", forbidden=w_set)
        _check_smooth(pi, "pi")

    if len(follower_doc.G) != follower_doc.dim:
        raise InvariantViolation("follower G must have one component per follower dimension")
    G = tuple(_parse(text, f"follower.G[{k}]") for k, text in enumerate(follower_doc.G))
    for k, component in enumerate(G):
        _check_names(component, x_names | w_set, f"follower.G[{k}]")
    K = _feasible_set(follower_doc, x_names)
    follower = FollowerSpec(dim=follower_doc.dim, G=G, K=K, search=_search_box(follower_doc, K, w_names))

    g = GameInstance(
        name=doc.name,
        leaders=tuple(leaders),
        follower=follower,
        h=h,
        pi=pi,
        raw_h=raw_h,
        sense=doc.sense,
    )
    _check_k_nonempty(g)
    logger.info("loaded instance %s: %d leaders, follower dimension %d", g.name, g.n_leaders, follower.dim)
    return g


def load_instance(json_text: str) -> GameInstance:
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"instance is not valid JSON: {exc}") from exc
    try:
        doc = InstanceDocument.model_validate(data)
    except ValidationError as exc:
        raise SchemaError(f"instance does not match the schema:\n{exc}") from exc
    return instance_from_document(doc)


def _bound_source(bound: Optional[Expr]) -> Optional[str]:
    return None if bound is None else bound.to_source()


def instance_document(g: GameInstance) -> dict[str, Any]:
    K = g.follower.K
    if isinstance(K, BoxSet):
        k_doc: dict[str, Any] = {
            "kind": "box",
            "lower": [_bound_source(b) for b in K.lower],
            "upper": [_bound_source(b) for b in K.upper],
        }
    else:
        k_doc = {"kind": "budget", "bound": K.bound.to_source()}
    doc: dict[str, Any] = {
        "name": g.name,
        "sense": g.sense,
        "leaders": [
            {
                "id": leader.id,
                "dim": leader.dim,
                "lower": list(leader.box.lower),
                "upper": list(leader.box.upper),
                "phi": leader.phi.to_source(),
            }
            for leader in g.leaders
        ],
        "follower": {
            "dim": g.follower.dim,
            "G": [component.to_source() for component in g.follower.G],
            "K": k_doc,
            "search_lower": list(g.follower.search.lower),
            "search_upper": list(g.follower.search.upper),
        },
    }
    if g.is_raw:
        doc["raw_h"] = [term.to_source() for term in g.raw_h]
    else:
        doc["h"] = g.h.to_source()
    if g.pi is not None:
        doc["pi"] = g.pi.to_source()
    return doc


def dump_instance(g: GameInstance) -> str:
    return json.dumps(instance_document(g), indent=2) + "\n"
