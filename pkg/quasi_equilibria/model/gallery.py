"""Built-in game instances.

Every builder produces an instance document and routes it through the same
validation as user JSON, so gallery instances obey the loader's invariants.
"""

from __future__ import annotations

import logging
import math
from typing import Any, Callable, Mapping, Optional

from pydantic import ValidationError

from ..errors import ExprError, InstanceError, InvalidParamsError, UnknownGalleryError
from ..expr import parse_expression
from .instance import GameInstance, follower_variable_names, leader_variable_names
from .loader import InstanceDocument, instance_from_document

logger = logging.getLogger(__name__)

Params = Mapping[str, Any]


def _literal(value: float) -> str:
    text = repr(float(value))
    return f"({text})" if value < 0 else text


def _number(params: Params, key: str, default: float) -> float:
    raw = params.get(key, default)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise InvalidParamsError(f"parameter {key}={raw!r} is not a number") from None
    if not math.isfinite(value):
        raise InvalidParamsError(f"parameter {key} must be finite")
    return value


def _integer(params: Params, key: str, default: int) -> int:
    value = _number(params, key, default)
    if value != int(value):
        raise InvalidParamsError(f"parameter {key} must be an integer")
    return int(value)


def _vector(params: Params, key: str, default: float, length: int) -> list[float]:
    raw = params.get(key, default)
    if isinstance(raw, str):
        raw = [part for part in raw.split(",") if part.strip()]
    if not isinstance(raw, (list, tuple)):
        raw = [raw] * length
    values = [_number({key: item}, key, default) for item in raw]
    if len(values) == 1 and length > 1:
        values = values * length
    if len(values) != length:
        raise InvalidParamsError(f"parameter {key} needs {length} entries, got {len(values)}")
    return values


def _leader(i: int, lower: float, upper: float, phi: str) -> dict[str, Any]:
    return {"id": i, "dim": 1, "lower": [lower], "upper": [upper], "phi": phi}


def _pang_fukushima_follower() -> dict[str, Any]:
    return {
        "dim": 1,
        "G": ["-1 + x1 + x2 + w"],
        "K": {"kind": "box", "lower": [0.0], "upper": [None]},
        "search_lower": [0.0],
        "search_upper": [2.0],
    }


def pang_fukushima(params: Params) -> dict[str, Any]:
    """The original two-leader game with opposite couplings; raw mode only."""
    return {
        "name": "pang_fukushima",
        "leaders": [_leader(1, 0.0, 1.0, "0.5*x1"), _leader(2, 0.0, 1.0, "-0.5*x2")],
        "raw_h": ["w", "-w"],
        "follower": _pang_fukushima_follower(),
    }


def pf_variant(params: Params) -> dict[str, Any]:
    h = str(params.get("h", params.get("h_expr", "-w")))
    try:
        names = parse_expression(h).variables()
    except ExprError as exc:
        raise InvalidParamsError(f"parameter h={h!r} is not an expression: {exc}") from None
    if names - {"w"}:
        raise InvalidParamsError(f"parameter h may only use w, got {', '.join(sorted(names))}")
    return {
        "name": "pf_variant",
        "leaders": [_leader(1, 0.0, 1.0, "0.5*x1"), _leader(2, 0.0, 1.0, "-0.5*x2")],
        "h": h,
        "pi": "0.5*x1 - 0.5*x2",
        "follower": _pang_fukushima_follower(),
    }


def multivalued_vi_demo(params: Params) -> dict[str, Any]:
    return {
        "name": "multivalued_vi_demo",
        "leaders": [_leader(1, 0.0, 1.0, "0")],
        "h": "w",
        "pi": "0",
        "follower": {
            "dim": 1,
            "G": ["1 - 2*w"],
            "K": {"kind": "box", "lower": [0.0], "upper": [1.0]},
        },
    }


def congestion_control(params: Params) -> dict[str, Any]:
    """Users maximise log utility of their rates minus a shared congestion charge.

    The manager allocates y by projecting the requested rates onto the budget
    set, so G(w; x) = w - x. Utilities are negated into minimisation form and
    the instance is flagged ``sense = "max"``.
    """
    n = _integer(params, "N", 2)
    if n < 1:
        raise InvalidParamsError("N must be at least 1")
    a = _vector(params, "a", 1.0, n)
    xbar = _vector(params, "xbar", 1.0, n)
    c = _number(params, "c", 1.0)
    gamma = _number(params, "gamma", 1.0)
    if c <= 0:
        raise InvalidParamsError("budget c must be positive")
    if gamma < 0:
        raise InvalidParamsError("congestion weight gamma must be nonnegative")
    if any(v <= 0 for v in xbar):
        raise InvalidParamsError("rate caps xbar must be positive")

    x = [leader_variable_names(i, 1)[0] for i in range(1, n + 1)]
    w = follower_variable_names(n)
    phis = [f"-{_literal(a_i)}*log(1 + {x_i})" for a_i, x_i in zip(a, x)]
    return {
        "name": "congestion_control",
        "sense": "max",
        "leaders": [_leader(i + 1, 0.0, xbar[i], phis[i]) for i in range(n)],
        "pi": " + ".join(f"({phi})" for phi in phis),
        "h": f"{_literal(gamma)}*(" + " + ".join(f"{w_j}^2" for w_j in w) + ")",
        "follower": {
            "dim": n,
            "G": [f"{w_j} - {x_j}" for w_j, x_j in zip(w, x)],
            "K": {"kind": "budget", "bound": _literal(c)},
        },
    }


GALLERY: dict[str, Callable[[Params], dict[str, Any]]] = {
    "pang_fukushima": pang_fukushima,
    "pf_variant": pf_variant,
    "multivalued_vi_demo": multivalued_vi_demo,
    "congestion_control": congestion_control,
}


def build_gallery(name: str, params: Optional[Params] = None) -> GameInstance:
    try:
        builder = GALLERY[name]
    except KeyError:
        raise UnknownGalleryError(
            f"unknown gallery instance {name!r} (choose from {', '.join(sorted(GALLERY))})"
        ) from None
    document = builder(dict(params or {}))
    try:
        g = instance_from_document(InstanceDocument.model_validate(document))
    except (ValidationError, InstanceError, ExprError) as exc:
        raise InvalidParamsError(f"gallery instance {name} rejected its parameters: {exc}") from exc
    logger.debug("built gallery instance %s with params %s", name, dict(params or {}))
    return g
