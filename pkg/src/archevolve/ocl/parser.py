"""Recursive descent parser for ``.amocl`` rule documents.

Grammar, lowest precedence first::

    document   ::= { invariant }
    invariant  ::= "context" IDENT "inv" IDENT [ STRING ] ":" expr
    expr       ::= or_expr { "implies" or_expr }
    or_expr    ::= and_expr { "or" and_expr }
    and_expr   ::= comparison { "and" comparison }
    comparison ::= additive [ ( "=" | "<>" | "<" | "<=" | ">" | ">=" ) additive ]
    additive   ::= term { ( "+" | "-" ) term }
    term       ::= unary { ( "*" | "/" ) unary }
    unary      ::= ( "not" | "-" ) unary | postfix
    postfix    ::= primary { "." IDENT | "->" collection_op }
    collection_op ::= ( "select" | "forAll" | "exists" ) "(" IDENT "|" expr ")"
                    | ( "size" | "isEmpty" | "notEmpty" ) "(" ")"
    primary    ::= "self" | IDENT | INTEGER | REAL | STRING
                 | "true" | "false" | "(" expr ")"

Line comments start with ``--``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from archevolve.errors import SourceSpan
from archevolve.ocl.ast import (
    COLLECTION_OPS,
    ITERATOR_OPS,
    Binary,
    CollectionOp,
    ConstraintSet,
    Expr,
    Invariant,
    Literal,
    Navigation,
    OclSyntaxError,
    SelfExpr,
    Unary,
    VarRef,
)

KEYWORDS = frozenset(
    {"context", "inv", "self", "true", "false", "and", "or", "not", "implies"}
)

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>--[^\n]*)
  | (?P<real>[0-9]+\.[0-9]+(?:[eE][+-]?[0-9]+)?|[0-9]+[eE][+-]?[0-9]+)
  | (?P<integer>[0-9]+)
  | (?P<string>'(?:[^'\\\n]|\\.)*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|<>|<=|>=|[=<>+\-*/().:|])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident | keyword | integer | real | string | op | eof
    value: str
    span: SourceSpan


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        span = SourceSpan(line, pos - line_start + 1)
        if m is None:
            if text[pos] == "'":
                raise OclSyntaxError("unterminated string literal", span)
            raise OclSyntaxError(f"unexpected character {text[pos]!r}", span)
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            if kind == "ident" and value in KEYWORDS:
                kind = "keyword"
            tokens.append(Token(kind, value, span))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", SourceSpan(line, pos - line_start + 1)))
    return tokens


def _unescape(raw: str) -> str:
    return re.sub(r"\\(.)", r"\1", raw[1:-1])


class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, kind: str, value: str | None = None) -> bool:
        tok = self.tok
        return tok.kind == kind and (value is None or tok.value == value)

    def at_op(self, *values: str) -> bool:
        return self.tok.kind == "op" and self.tok.value in values

    def expect(self, kind: str, value: str | None = None) -> Token:
        if not self.at(kind, value):
            want = repr(value) if value is not None else kind
            raise OclSyntaxError(f"expected {want}, found {self._describe()}", self.tok.span)
        return self.advance()

    def _describe(self) -> str:
        tok = self.tok
        return "end of input" if tok.kind == "eof" else repr(tok.value)

    # -- document ---------------------------------------------------------

    def document(self) -> ConstraintSet:
        invariants: list[Invariant] = []
        seen: set[str] = set()
        while not self.at("eof"):
            inv = self.invariant()
            if inv.name in seen:
                raise OclSyntaxError(f"duplicate invariant name {inv.name!r}", inv.span)
            seen.add(inv.name)
            invariants.append(inv)
        return ConstraintSet(tuple(invariants))

    def invariant(self) -> Invariant:
        start = self.expect("keyword", "context").span
        context = self.expect("ident").value
        self.expect("keyword", "inv")
        name_tok = self.expect("ident")
        message = None
        if self.at("string"):
            message = _unescape(self.advance().value)
        self.expect("op", ":")
        body = self.expr()
        return Invariant(name_tok.value, context, body, message, start)

    # -- expressions ------------------------------------------------------

    def expr(self) -> Expr:
        left = self.or_expr()
        while self.at("keyword", "implies"):
            span = self.advance().span
            left = Binary("implies", left, self.or_expr(), span)
        return left

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.at("keyword", "or"):
            span = self.advance().span
            left = Binary("or", left, self.and_expr(), span)
        return left

    def and_expr(self) -> Expr:
        left = self.comparison()
        while self.at("keyword", "and"):
            span = self.advance().span
            left = Binary("and", left, self.comparison(), span)
        return left

    def comparison(self) -> Expr:
        left = self.additive()
        if self.at_op("=", "<>", "<", "<=", ">", ">="):
            tok = self.advance()
            left = Binary(tok.value, left, self.additive(), tok.span)
            if self.at_op("=", "<>", "<", "<=", ">", ">="):
                raise OclSyntaxError("comparisons cannot be chained", self.tok.span)
        return left

    def additive(self) -> Expr:
        left = self.term()
        while self.at_op("+", "-"):
            tok = self.advance()
            left = Binary(tok.value, left, self.term(), tok.span)
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.at_op("*", "/"):
            tok = self.advance()
            left = Binary(tok.value, left, self.unary(), tok.span)
        return left

    def unary(self) -> Expr:
        if self.at("keyword", "not"):
            span = self.advance().span
            return Unary("not", self.unary(), span)
        if self.at_op("-"):
            span = self.advance().span
            return Unary("-", self.unary(), span)
        return self.postfix()

    def postfix(self) -> Expr:
        expr = self.primary()
        while True:
            if self.at_op("."):
                span = self.advance().span
                expr = Navigation(expr, self.expect("ident").value, span)
            elif self.at_op("->"):
                span = self.advance().span
                expr = self.collection_op(expr, span)
            else:
                return expr

    def collection_op(self, source: Expr, span: SourceSpan) -> Expr:
        tok = self.expect("ident")
        if tok.value not in COLLECTION_OPS:
            raise OclSyntaxError(
                f"unknown collection operation {tok.value!r}, expected one of "
                f"{', '.join(COLLECTION_OPS)}",
                tok.span,
            )
        self.expect("op", "(")
        if tok.value in ITERATOR_OPS:
            var = self.expect("ident").value
            self.expect("op", "|")
            body = self.expr()
            self.expect("op", ")")
            return CollectionOp(source, tok.value, var, body, span)
        self.expect("op", ")")
        return CollectionOp(source, tok.value, span=span)

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "keyword":
            if tok.value == "self":
                self.advance()
                return SelfExpr(tok.span)
            if tok.value in ("true", "false"):
                self.advance()
                return Literal(tok.value == "true", "boolean", tok.span)
        elif tok.kind == "ident":
            self.advance()
            return VarRef(tok.value, tok.span)
        elif tok.kind == "integer":
            self.advance()
            return Literal(int(tok.value), "integer", tok.span)
        elif tok.kind == "real":
            self.advance()
            return Literal(float(tok.value), "real", tok.span)
        elif tok.kind == "string":
            self.advance()
            return Literal(_unescape(tok.value), "text", tok.span)
        elif self.at_op("("):
            self.advance()
            inner = self.expr()
            if not self.at_op(")"):
                raise OclSyntaxError(
                    f"unbalanced parenthesis: expected ')', found {self._describe()}",
                    self.tok.span,
                )
            self.advance()
            return inner
        raise OclSyntaxError(f"expected an expression, found {self._describe()}", tok.span)


def parse_rules(text: str) -> ConstraintSet:
    """Parse a rule document into a :class:`ConstraintSet`."""
    return Parser(text).document()


def parse_expr(text: str) -> Expr:
    parser = Parser(text)
    expr = parser.expr()
    parser.expect("eof")
    return expr
