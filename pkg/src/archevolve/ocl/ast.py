"""Syntax tree for the constraint language."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Union

from archevolve.errors import SourceSpan, SpannedError

COLLECTION_OPS = ("select", "forAll", "exists", "size", "isEmpty", "notEmpty")
ITERATOR_OPS = ("select", "forAll", "exists")
COMPARISONS = ("=", "<>", "<", "<=", ">", ">=")
ARITHMETIC = ("+", "-", "*", "/")
LOGICAL = ("and", "or", "implies")


class OclError(SpannedError):
    """Base class for constraint language errors."""


class OclSyntaxError(OclError):
    pass


class OclTypeError(OclError):
    pass


_NOWHERE = SourceSpan(1, 1)


@dataclass(frozen=True)
class SelfExpr:
    span: SourceSpan = field(default=_NOWHERE, compare=False)


@dataclass(frozen=True)
class VarRef:
    name: str
    span: SourceSpan = field(default=_NOWHERE, compare=False)


@dataclass(frozen=True)
class Literal:
    value: int | float | str | bool
    kind: str  # integer | real | text | boolean
    span: SourceSpan = field(default=_NOWHERE, compare=False)


@dataclass(frozen=True)
class Navigation:
    """``source.name``: attribute access or reference navigation."""

    source: Expr
    name: str
    span: SourceSpan = field(default=_NOWHERE, compare=False)


@dataclass(frozen=True)
class CollectionOp:
    """``source->op(...)``; ``var``/``body`` are set for iterator ops."""

    source: Expr
    op: str
    var: str | None = None
    body: Expr | None = None
    span: SourceSpan = field(default=_NOWHERE, compare=False)


@dataclass(frozen=True)
class Unary:
    op: str  # not | -
    operand: Expr
    span: SourceSpan = field(default=_NOWHERE, compare=False)


@dataclass(frozen=True)
class Binary:
    op: str
    left: Expr
    right: Expr
    span: SourceSpan = field(default=_NOWHERE, compare=False)


Expr = Union[SelfExpr, VarRef, Literal, Navigation, CollectionOp, Unary, Binary]


@dataclass(frozen=True)
class Invariant:
    name: str
    context: str
    body: Expr
    message: str | None = None
    span: SourceSpan = field(default=_NOWHERE, compare=False)

    @property
    def diagnostic(self) -> str:
        return self.message or f"invariant {self.name} violated"


@dataclass(frozen=True)
class ConstraintSet:
    invariants: tuple[Invariant, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "invariants", tuple(self.invariants))
        dupes = [n for n, c in Counter(i.name for i in self.invariants).items() if c > 1]
        if dupes:
            raise OclSyntaxError(f"duplicate invariant name {dupes[0]!r}")

    def __len__(self) -> int:
        return len(self.invariants)

    def __iter__(self):
        return iter(self.invariants)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(i.name for i in self.invariants)

    def get(self, name: str) -> Invariant:
        for inv in self.invariants:
            if inv.name == name:
                return inv
        raise KeyError(name)


def to_text(expr: Expr) -> str:
    """Render ``expr`` back to fully parenthesized source text."""
    if isinstance(expr, SelfExpr):
        return "self"
    if isinstance(expr, VarRef):
        return expr.name
    if isinstance(expr, Literal):
        if expr.kind == "text":
            return "'" + str(expr.value).replace("\\", "\\\\").replace("'", "\\'") + "'"
        if expr.kind == "boolean":
            return "true" if expr.value else "false"
        return repr(expr.value)
    if isinstance(expr, Navigation):
        return f"{to_text(expr.source)}.{expr.name}"
    if isinstance(expr, CollectionOp):
        if expr.body is None:
            return f"{to_text(expr.source)}->{expr.op}()"
        return f"{to_text(expr.source)}->{expr.op}({expr.var} | {to_text(expr.body)})"
    if isinstance(expr, Unary):
        sep = " " if expr.op == "not" else ""
        return f"({expr.op}{sep}{to_text(expr.operand)})"
    if isinstance(expr, Binary):
        return f"({to_text(expr.left)} {expr.op} {to_text(expr.right)})"
    raise TypeError(f"not an expression: {expr!r}")


def invariant_to_text(inv: Invariant) -> str:
    message = ""
    if inv.message is not None:
        message = " " + to_text(Literal(inv.message, "text"))
    return f"context {inv.context} inv {inv.name}{message}: {to_text(inv.body)}"
