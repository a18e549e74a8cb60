"""Type checking and evaluation of constraint sets over model instances.

Invariants are type-checked against the metamodel, then compiled into
nested closures so each body is walked once per rule set rather than once
per context object.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

from archevolve.metamodel import Metamodel, ModelInstance, ObjectNode
from archevolve.ocl.ast import (
    Binary,
    CollectionOp,
    ConstraintSet,
    Expr,
    Invariant,
    Literal,
    Navigation,
    OclTypeError,
    SelfExpr,
    Unary,
    VarRef,
)

NUMERIC = ("integer", "real")


@dataclass(frozen=True)
class OclType:
    kind: str  # integer | real | text | boolean | object | collection
    cls: str | None = None

    def __str__(self) -> str:
        if self.cls is None:
            return self.kind
        return f"{self.kind}({self.cls})"


INTEGER = OclType("integer")
REAL = OclType("real")
TEXT = OclType("text")
BOOLEAN = OclType("boolean")

_SCALARS = {"integer": INTEGER, "real": REAL, "text": TEXT, "boolean": BOOLEAN}


class EvaluationFailure(Exception):
    """A runtime failure inside an invariant body (e.g. division by zero)."""


@dataclass(frozen=True)
class InvariantResult:
    name: str
    holds: bool
    failing_objects: tuple[str, ...] = ()
    message: str = ""
    errors: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    results: tuple[InvariantResult, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(r.holds for r in self.results)

    @property
    def failed(self) -> list[InvariantResult]:
        return [r for r in self.results if not r.holds]

    def result(self, name: str) -> InvariantResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "results": [
                {
                    "name": r.name,
                    "holds": r.holds,
                    "failing_objects": list(r.failing_objects),
                    "message": r.message,
                    "errors": list(r.errors),
                }
                for r in self.results
            ],
        }


# -- type checking -------------------------------------------------------


class _Checker:
    def __init__(self, meta: Metamodel):
        self.meta = meta

    def check(self, expr: Expr, scope: dict[str, OclType]) -> OclType:
        if isinstance(expr, SelfExpr):
            return scope["self"]
        if isinstance(expr, VarRef):
            if expr.name not in scope or expr.name == "self":
                raise OclTypeError(
                    f"unknown variable {expr.name!r} (iterator variables must be "
                    "declared, e.g. select(d | d.kind = 'camera'))",
                    expr.span,
                )
            return scope[expr.name]
        if isinstance(expr, Literal):
            return _SCALARS[expr.kind]
        if isinstance(expr, Navigation):
            source = self.check(expr.source, scope)
            if source.kind != "object":
                raise OclTypeError(
                    f"cannot navigate {expr.name!r} from a {source} value", expr.span
                )
            cls = self.meta.get(source.cls)
            assert cls is not None
            attr = cls.attribute(expr.name)
            if attr is not None:
                return _SCALARS[attr.type]
            ref = cls.reference(expr.name)
            if ref is not None:
                return OclType("collection", ref.target)
            raise OclTypeError(f"{cls.name} has no feature {expr.name!r}", expr.span)
        if isinstance(expr, CollectionOp):
            source = self.check(expr.source, scope)
            if source.kind != "collection":
                raise OclTypeError(
                    f"->{expr.op}() applies to reference navigations, not {source}",
                    expr.span,
                )
            if expr.body is None:
                return INTEGER if expr.op == "size" else BOOLEAN
            var = expr.var
            assert var is not None
            if var in scope:
                raise OclTypeError(f"iterator variable {var!r} shadows an outer name", expr.span)
            inner = dict(scope)
            inner[var] = OclType("object", source.cls)
            body = self.check(expr.body, inner)
            if body != BOOLEAN:
                raise OclTypeError(f"->{expr.op}() body must be boolean, got {body}", expr.span)
            return source if expr.op == "select" else BOOLEAN
        if isinstance(expr, Unary):
            operand = self.check(expr.operand, scope)
            if expr.op == "not":
                if operand != BOOLEAN:
                    raise OclTypeError(f"'not' expects boolean, got {operand}", expr.span)
                return BOOLEAN
            if operand.kind not in NUMERIC:
                raise OclTypeError(f"unary '-' expects a number, got {operand}", expr.span)
            return operand
        if isinstance(expr, Binary):
            left = self.check(expr.left, scope)
            right = self.check(expr.right, scope)
            op = expr.op
            if op in ("and", "or", "implies"):
                if left != BOOLEAN or right != BOOLEAN:
                    raise OclTypeError(
                        f"'{op}' expects boolean operands, got {left} and {right}", expr.span
                    )
                return BOOLEAN
            numeric = left.kind in NUMERIC and right.kind in NUMERIC
            if op in ("+", "-", "*", "/"):
                if not numeric:
                    raise OclTypeError(
                        f"'{op}' expects numbers, got {left} and {right}", expr.span
                    )
                if op == "/" or REAL in (left, right):
                    return REAL
                return INTEGER
            if op in ("<", "<=", ">", ">="):
                if not numeric:
                    raise OclTypeError(
                        f"'{op}' expects numbers, got {left} and {right}", expr.span
                    )
                return BOOLEAN
            # = and <>
            if numeric or (left == right and left.kind != "collection"):
                return BOOLEAN
            raise OclTypeError(f"cannot compare {left} with {right}", expr.span)
        raise TypeError(f"not an expression: {expr!r}")


def typecheck(rules: ConstraintSet, meta: Metamodel) -> None:
    """Raise :class:`OclTypeError` unless every invariant is well typed."""
    checker = _Checker(meta)
    for inv in rules:
        if meta.get(inv.context) is None:
            raise OclTypeError(
                f"invariant {inv.name!r}: unknown context class {inv.context!r}", inv.span
            )
        body = checker.check(inv.body, {"self": OclType("object", inv.context)})
        if body != BOOLEAN:
            raise OclTypeError(
                f"invariant {inv.name!r}: body must be boolean, got {body}", inv.span
            )


# -- compilation ---------------------------------------------------------

Env = dict[str, Any]
Compiled = Callable[[Env], Any]


class _Compiler:
    def __init__(self, meta: Metamodel, instance: ModelInstance):
        self.meta = meta
        self.instance = instance
        self.attrs = {c.name: {a.name for a in c.attributes} for c in meta.classes}

    def compile(self, expr: Expr) -> Compiled:
        if isinstance(expr, SelfExpr):
            return lambda env: env["self"]
        if isinstance(expr, VarRef):
            name = expr.name
            return lambda env: env[name]
        if isinstance(expr, Literal):
            value = expr.value
            return lambda env: value
        if isinstance(expr, Navigation):
            return self._navigation(expr)
        if isinstance(expr, CollectionOp):
            return self._collection(expr)
        if isinstance(expr, Unary):
            operand = self.compile(expr.operand)
            if expr.op == "not":
                return lambda env: not operand(env)
            return lambda env: -operand(env)
        if isinstance(expr, Binary):
            return self._binary(expr)
        raise TypeError(f"not an expression: {expr!r}")

    def _navigation(self, expr: Navigation) -> Compiled:
        source = self.compile(expr.source)
        name = expr.name
        get = self.instance.get

        def navigate(env: Env) -> Any:
            obj: ObjectNode = source(env)
            if name in self.attrs[obj.cls]:
                return obj.attributes[name]
            return tuple(get(t) for t in obj.links.get(name, ()))

        return navigate

    def _collection(self, expr: CollectionOp) -> Compiled:
        source = self.compile(expr.source)
        op = expr.op
        if op == "size":
            return lambda env: len(source(env))
        if op == "isEmpty":
            return lambda env: not source(env)
        if op == "notEmpty":
            return lambda env: bool(source(env))
        assert expr.body is not None and expr.var is not None
        body = self.compile(expr.body)
        var = expr.var

        def bound(env: Env, item: ObjectNode) -> Any:
            inner = dict(env)
            inner[var] = item
            return body(inner)

        if op == "select":
            return lambda env: tuple(x for x in source(env) if bound(env, x))
        if op == "forAll":
            return lambda env: all(bound(env, x) for x in source(env))
        return lambda env: any(bound(env, x) for x in source(env))

    def _binary(self, expr: Binary) -> Compiled:
        left = self.compile(expr.left)
        right = self.compile(expr.right)
        op = expr.op
        if op == "and":
            return lambda env: bool(left(env)) and bool(right(env))
        if op == "or":
            return lambda env: bool(left(env)) or bool(right(env))
        if op == "implies":
            return lambda env: (not left(env)) or bool(right(env))
        if op == "+":
            return lambda env: left(env) + right(env)
        if op == "-":
            return lambda env: left(env) - right(env)
        if op == "*":
            return lambda env: left(env) * right(env)
        if op == "/":
            line = expr.span

            def divide(env: Env) -> float:
                num, den = left(env), right(env)
                if den == 0:
                    raise EvaluationFailure(f"division by zero at {line}")
                return num / den

            return divide
        if op in ("=", "<>"):
            if op == "=":
                return lambda env: _values_equal(left(env), right(env))
            return lambda env: not _values_equal(left(env), right(env))
        if op == "<":
            return lambda env: left(env) < right(env)
        if op == "<=":
            return lambda env: left(env) <= right(env)
        if op == ">":
            return lambda env: left(env) > right(env)
        if op == ">=":
            return lambda env: left(env) >= right(env)
        raise TypeError(f"unknown operator {op!r}")


def _values_equal(a: Any, b: Any) -> bool:
    if isinstance(a, ObjectNode) and isinstance(b, ObjectNode):
        return a.id == b.id
    return a == b


def evaluate(
    rules: ConstraintSet, instance: ModelInstance, meta: Metamodel
) -> ValidationReport:
    """Evaluate every invariant over every object of its context class.

    Runtime failures such as division by zero mark the affected context
    object as failing and are reported in ``errors``; the remaining
    invariants are still evaluated.
    """
    typecheck(rules, meta)
    compiler = _Compiler(meta, instance)
    extents: dict[str, list[ObjectNode]] = {}
    for obj in instance.objects:
        extents.setdefault(obj.cls, []).append(obj)
    results = []
    for inv in rules:
        results.append(_evaluate_one(inv, compiler.compile(inv.body), extents))
    return ValidationReport(tuple(results))


def _evaluate_one(
    inv: Invariant, body: Compiled, extents: dict[str, list[ObjectNode]]
) -> InvariantResult:
    failing: list[str] = []
    errors: list[str] = []
    for obj in extents.get(inv.context, ()):
        try:
            ok = body({"self": obj})
        except EvaluationFailure as exc:
            errors.append(f"{obj.id}: {exc}")
            ok = False
        if not ok:
            failing.append(obj.id)
    return InvariantResult(
        inv.name, not failing, tuple(failing), inv.diagnostic, tuple(errors)
    )
