"""Scalar expressions over named variables.

Every function in a game instance (leader objectives, the shared coupling h,
the potential, follower map components and feasible-set bounds) is an
:class:`Expr`. Grammar, lowest precedence first::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := atom ('^' factor)?
    atom   := number | ident | ident '(' args ')' | '(' expr ')' | '-' atom

Recognised calls are ``max``/``min`` (one or more arguments) and
``log``/``exp``/``abs`` (exactly one). Gradients are central finite
differences; at kinks of max/min they return the average of the one-sided
slopes, so callers must treat them as approximate there.
"""

from __future__ import annotations

import logging
import math
import re
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from . import numdiff
from .errors import (
    ArityError,
    ExprDomainError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownFunctionError,
)

logger = logging.getLogger(__name__)

IDENTIFIER = re.compile(r"[a-zA-Z][a-zA-Z0-9_]*")
_NUMBER = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")

UNARY_CALLS = frozenset({"log", "exp", "abs"})
NARY_CALLS = frozenset({"max", "min"})
CALLS = UNARY_CALLS | NARY_CALLS
KINK_CALLS = frozenset({"max", "min", "abs"})

_INT_POWER_LIMIT = 1 << 20


class VarEnv(Mapping):
    """Immutable identifier -> value binding; unbound lookups raise."""

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[str, float] | Iterable[tuple[str, float]] = ()) -> None:
        self._values = {str(k): float(v) for k, v in dict(values).items()}

    @classmethod
    def from_vectors(cls, names: Sequence[str], values: Sequence[float]) -> "VarEnv":
        if len(names) != len(values):
            raise ValueError(f"{len(names)} names for {len(values)} values")
        return cls(zip(names, values))

    def __getitem__(self, name: str) -> float:
        try:
            return self._values[name]
        except KeyError:
            raise UnboundVariableError(name) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        return f"VarEnv({self._values!r})"


# --- runtime helpers used by compiled expressions ---------------------------


def _log(value: float) -> float:
    if value <= 0:
        raise ExprDomainError(f"log of nonpositive value {value!r}")
    return math.log(value)


def _exp(value: float) -> float:
    try:
        return math.exp(value)
    except OverflowError:
        raise ExprDomainError(f"exp overflow at {value!r}") from None


def _div(num: float, den: float) -> float:
    if den == 0:
        raise ExprDomainError("division by zero")
    return num / den


def _int_power(base: float, exponent: int) -> float:
    result = 1.0
    while exponent:
        if exponent & 1:
            result *= base
        base *= base
        exponent >>= 1
    return result


def _pow(base: float, exponent: float) -> float:
    if float(exponent).is_integer() and abs(exponent) <= _INT_POWER_LIMIT:
        n = int(exponent)
        result = _int_power(base, abs(n))
        if n < 0:
            if result == 0:
                raise ExprDomainError("zero raised to a negative power")
            result = 1.0 / result
        return result
    if base > 0:
        return _exp(exponent * math.log(base))
    if base == 0 and exponent > 0:
        return 0.0
    raise ExprDomainError(f"{base!r} ^ {exponent!r} is undefined over the reals")


_RUNTIME = {
    "_log": _log,
    "_exp": _exp,
    "_div": _div,
    "_pow": _pow,
    "abs": abs,
    "max": max,
    "min": min,
    "__builtins__": {},
}


# --- tree ------------------------------------------------------------------


class Expr:
    """Base node. Subclasses are frozen dataclasses, hence immutable and hashable."""

    def variables(self) -> frozenset[str]:
        raise NotImplementedError

    def calls(self) -> frozenset[str]:
        raise NotImplementedError

    def to_source(self) -> str:
        """Fully parenthesised text that parses back to an equivalent tree."""
        raise NotImplementedError

    def _python(self) -> str:
        raise NotImplementedError

    @cached_property
    def _compiled(self) -> Callable[[Mapping[str, float]], float]:
        return eval(f"lambda env: {self._python()}", dict(_RUNTIME))

    def __str__(self) -> str:
        return self.to_source()


def _format_number(value: float) -> str:
    text = repr(float(value))
    return text if value >= 0 else f"(-{repr(-float(value))})"


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def variables(self) -> frozenset[str]:
        return frozenset()

    def calls(self) -> frozenset[str]:
        return frozenset()

    def to_source(self) -> str:
        return _format_number(self.value)

    def _python(self) -> str:
        return f"({float(self.value)!r})"


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def __post_init__(self) -> None:
        if not IDENTIFIER.fullmatch(self.name or ""):
            raise ValueError(f"invalid identifier {self.name!r}")

    def variables(self) -> frozenset[str]:
        return frozenset({self.name})

    def calls(self) -> frozenset[str]:
        return frozenset()

    def to_source(self) -> str:
        return self.name

    def _python(self) -> str:
        return f"env[{self.name!r}]"


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # neg | log | exp | abs
    arg: Expr

    def variables(self) -> frozenset[str]:
        return self.arg.variables()

    def calls(self) -> frozenset[str]:
        own = frozenset() if self.op == "neg" else frozenset({self.op})
        return own | self.arg.calls()

    def to_source(self) -> str:
        if self.op == "neg":
            return f"(-{_atom_source(self.arg)})"
        return f"{self.op}({self.arg.to_source()})"

    def _python(self) -> str:
        inner = self.arg._python()
        if self.op == "neg":
            return f"(-{inner})"
        if self.op == "abs":
            return f"abs({inner})"
        return f"_{self.op}({inner})"


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # + - * / ^
    left: Expr
    right: Expr

    def variables(self) -> frozenset[str]:
        return self.left.variables() | self.right.variables()

    def calls(self) -> frozenset[str]:
        return self.left.calls() | self.right.calls()

    def to_source(self) -> str:
        return f"({self.left.to_source()} {self.op} {self.right.to_source()})"

    def _python(self) -> str:
        left, right = self.left._python(), self.right._python()
        if self.op == "/":
            return f"_div({left}, {right})"
        if self.op == "^":
            return f"_pow({left}, {right})"
        return f"({left} {self.op} {right})"


@dataclass(frozen=True)
class Call(Expr):
    op: str  # max | min
    args: tuple[Expr, ...]

    def variables(self) -> frozenset[str]:
        return frozenset().union(*(a.variables() for a in self.args))

    def calls(self) -> frozenset[str]:
        return frozenset({self.op}).union(*(a.calls() for a in self.args))

    def to_source(self) -> str:
        return f"{self.op}({', '.join(a.to_source() for a in self.args)})"

    def _python(self) -> str:
        if len(self.args) == 1:
            return self.args[0]._python()
        return f"{self.op}({', '.join(a._python() for a in self.args)})"


def _atom_source(e: Expr) -> str:
    text = e.to_source()
    return text if isinstance(e, (Var, Call)) or text.startswith("(") else f"({text})"


# --- parser ----------------------------------------------------------------


@dataclass(frozen=True)
class _Token:
    kind: str  # num | ident | op | end
    text: str
    offset: int


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
            continue
        number = _NUMBER.match(text, i)
        if number:
            tokens.append(_Token("num", number.group(), _byte_offset(text, i)))
            i = number.end()
            continue
        ident = IDENTIFIER.match(text, i)
        if ident:
            tokens.append(_Token("ident", ident.group(), _byte_offset(text, i)))
            i = ident.end()
            continue
        if c in "+-*/^(),":
            tokens.append(_Token("op", c, _byte_offset(text, i)))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", _byte_offset(text, i))
    tokens.append(_Token("end", "", _byte_offset(text, len(text))))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self._tokens = _tokenize(text)
        self._index = 0

    @property
    def token(self) -> _Token:
        return self._tokens[self._index]

    def _advance(self) -> _Token:
        token = self.token
        self._index += 1
        return token

    def _accept(self, op: str) -> bool:
        if self.token.kind == "op" and self.token.text == op:
            self._advance()
            return True
        return False

    def _expect(self, op: str) -> None:
        if not self._accept(op):
            found = self.token.text or "end of input"
            raise ExprSyntaxError(f"expected {op!r}, found {found!r}", self.token.offset)

    def parse(self) -> Expr:
        tree = self.expr()
        if self.token.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.token.text!r}", self.token.offset)
        return tree

    def expr(self) -> Expr:
        node = self.term()
        while self.token.kind == "op" and self.token.text in "+-":
            op = self._advance().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.token.kind == "op" and self.token.text in "*/":
            op = self._advance().text
            node = Binary(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        base = self.atom()
        if self._accept("^"):
            return Binary("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        token = self.token
        if token.kind == "num":
            self._advance()
            value = float(token.text)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"number {token.text!r} out of range", token.offset)
            return Const(value)
        if token.kind == "ident":
            self._advance()
            if self.token.kind == "op" and self.token.text == "(":
                return self._call(token)
            if token.text in CALLS:
                raise ExprSyntaxError(f"function {token.text!r} used without arguments", token.offset)
            return Var(token.text)
        if self._accept("("):
            inner = self.expr()
            self._expect(")")
            return inner
        if self._accept("-"):
            return Unary("neg", self.atom())
        found = token.text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", token.offset)

    def _call(self, name: _Token) -> Expr:
        if name.text not in CALLS:
            raise UnknownFunctionError(name.text, name.offset)
        self._expect("(")
        args = [self.expr()]
        while self._accept(","):
            args.append(self.expr())
        self._expect(")")
        if name.text in UNARY_CALLS:
            if len(args) != 1:
                raise ArityError(name.text, len(args), name.offset)
            return Unary(name.text, args[0])
        return Call(name.text, tuple(args))


def parse_expression(text: str) -> Expr:
    return _Parser(text).parse()


def as_expr(value: "str | float | int | Expr") -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Const(float(value)) if value >= 0 else Unary("neg", Const(-float(value)))
    return parse_expression(str(value))


# --- evaluation --------------------------------------------------------------


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    try:
        value = e._compiled(env)
    except KeyError as exc:
        raise UnboundVariableError(str(exc.args[0])) from None
    except ZeroDivisionError:
        raise ExprDomainError("division by zero") from None
    except OverflowError:
        raise ExprDomainError(f"overflow evaluating {e.to_source()}") from None
    value = float(value)
    if not math.isfinite(value):
        raise ExprDomainError(f"non-finite value evaluating {e.to_source()}")
    return value


def fd_gradient(
    e: Expr,
    env: Mapping[str, float],
    vars: Sequence[str],
    step: float = numdiff.DEFAULT_STEP,
) -> np.ndarray:
    """Central-difference gradient of ``e`` with respect to ``vars`` at ``env``."""
    base = dict(env)
    names = list(vars)
    try:
        point = np.array([base[name] for name in names], dtype=float)
    except KeyError as exc:
        raise UnboundVariableError(str(exc.args[0])) from None

    def at(values: np.ndarray) -> float:
        local = dict(base)
        local.update(zip(names, (float(v) for v in values)))
        return evaluate(e, local)

    return numdiff.gradient(at, point, range(len(names)), step)
