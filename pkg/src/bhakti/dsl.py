"""Filter expression language for document pre-filtering.

Grammar (invented for this engine; see grammar.md for the reference):

    expr    := or
    or      := and ("||" and)*
    and     := unary ("&&" unary)*
    unary   := "!" unary | primary
    primary := "(" expr ")" | IDENT cmp_op literal
    cmp_op  := "==" | "!=" | "<=" | ">=" | "<" | ">"
    literal := STRING | NUMBER | "true" | "false"

Evaluation semantics (total, never raises):
  * a comparison on a missing field is false (so ``!cmp`` is then true);
  * cross-type comparisons (number vs string vs boolean) are false for
    every operator, including ``!=``;
  * booleans support only ``==`` / ``!=``; ordered operators give false;
  * string ordering is lexicographic by Unicode code point.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

from .errors import QuerySyntaxError

ScalarValue = Union[str, float, bool]

MAX_DEPTH = 200  # nesting limit keeps parse/print/evaluate recursion bounded

CMP_OPS = ("==", "!=", "<=", ">=", "<", ">")


@dataclass(frozen=True)
class Cmp:
    field: str
    op: str
    literal: ScalarValue


@dataclass(frozen=True)
class Not:
    child: "QueryExpr"


@dataclass(frozen=True)
class And:
    children: tuple["QueryExpr", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["QueryExpr", ...]


QueryExpr = Union[Cmp, Not, And, Or]


# --- lexer ---

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"-?[0-9]+(\.[0-9]+)?([eE][+-]?[0-9]+)?")

_STRING_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}
_PRINT_ESCAPES = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\t": "\\t", "\r": "\\r"}


@dataclass(frozen=True)
class _Token:
    kind: str  # LPAREN RPAREN NOT AND OR OP IDENT STRING NUMBER BOOL EOF
    value: object
    offset: int  # byte offset of the token start


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0  # character position
    byte_pos = 0
    n = len(text)

    def advance(chars: int) -> None:
        nonlocal pos, byte_pos
        byte_pos += len(text[pos : pos + chars].encode("utf-8"))
        pos += chars

    while pos < n:
        ch = text[pos]
        if ch in " \t\r\n":
            advance(1)
            continue
        start = byte_pos
        if ch == "(":
            tokens.append(_Token("LPAREN", "(", start))
            advance(1)
        elif ch == ")":
            tokens.append(_Token("RPAREN", ")", start))
            advance(1)
        elif text.startswith("&&", pos):
            tokens.append(_Token("AND", "&&", start))
            advance(2)
        elif text.startswith("||", pos):
            tokens.append(_Token("OR", "||", start))
            advance(2)
        elif text.startswith(("==", "!=", "<=", ">="), pos):
            tokens.append(_Token("OP", text[pos : pos + 2], start))
            advance(2)
        elif ch in "<>":
            tokens.append(_Token("OP", ch, start))
            advance(1)
        elif ch == "!":
            tokens.append(_Token("NOT", "!", start))
            advance(1)
        elif ch == '"':
            advance(1)
            parts: list[str] = []
            while True:
                if pos >= n:
                    raise QuerySyntaxError("unterminated string literal", start)
                c = text[pos]
                if c == '"':
                    advance(1)
                    break
                if c == "\\":
                    if pos + 1 >= n:
                        raise QuerySyntaxError("unterminated string escape", byte_pos)
                    esc = text[pos + 1]
                    if esc not in _STRING_ESCAPES:
                        raise QuerySyntaxError(
                            f"invalid string escape '\\{esc}'", byte_pos
                        )
                    parts.append(_STRING_ESCAPES[esc])
                    advance(2)
                else:
                    parts.append(c)
                    advance(1)
            tokens.append(_Token("STRING", "".join(parts), start))
        elif ch in "0123456789" or (ch == "-" and pos + 1 < n and text[pos + 1] in "0123456789"):
            m = _NUMBER_RE.match(text, pos)
            assert m is not None
            value = float(m.group(0))
            if value in (float("inf"), float("-inf")):
                raise QuerySyntaxError("number literal out of float64 range", start)
            tokens.append(_Token("NUMBER", value, start))
            advance(m.end() - pos)
        else:
            m = _IDENT_RE.match(text, pos)
            if m is None:
                raise QuerySyntaxError(f"unexpected character {ch!r}", start)
            word = m.group(0)
            if word == "true":
                tokens.append(_Token("BOOL", True, start))
            elif word == "false":
                tokens.append(_Token("BOOL", False, start))
            else:
                tokens.append(_Token("IDENT", word, start))
            advance(len(word))
    tokens.append(_Token("EOF", None, byte_pos))
    return tokens


# --- parser ---

def _describe(tok: _Token) -> str:
    return "end of input" if tok.kind == "EOF" else repr(tok.value)


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0
        self.depth = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise QuerySyntaxError(f"expected {what}, found {_describe(tok)}", tok.offset)
        return self.take()

    def enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise QuerySyntaxError(
                f"expression nested deeper than {MAX_DEPTH}", self.peek().offset
            )

    def parse_expr(self) -> QueryExpr:
        self.enter()
        try:
            children = [self.parse_and()]
            while self.peek().kind == "OR":
                self.take()
                children.append(self.parse_and())
            return children[0] if len(children) == 1 else Or(tuple(children))
        finally:
            self.depth -= 1

    def parse_and(self) -> QueryExpr:
        children = [self.parse_unary()]
        while self.peek().kind == "AND":
            self.take()
            children.append(self.parse_unary())
        return children[0] if len(children) == 1 else And(tuple(children))

    def parse_unary(self) -> QueryExpr:
        self.enter()
        try:
            if self.peek().kind == "NOT":
                self.take()
                return Not(self.parse_unary())
            return self.parse_primary()
        finally:
            self.depth -= 1

    def parse_primary(self) -> QueryExpr:
        tok = self.peek()
        if tok.kind == "LPAREN":
            self.take()
            inner = self.parse_expr()
            self.expect("RPAREN", "')'")
            return inner
        field = self.expect("IDENT", "a field name").value
        op = self.expect("OP", "a comparison operator").value
        lit = self.peek()
        if lit.kind not in ("STRING", "NUMBER", "BOOL"):
            raise QuerySyntaxError(
                f"expected a literal (string, number, true or false), found {_describe(lit)}",
                lit.offset,
            )
        self.take()
        return Cmp(str(field), str(op), lit.value)  # type: ignore[arg-type]


def parse(text: str) -> QueryExpr:
    """Parse a filter expression; deterministic and total over valid inputs.

    Raises:
        QuerySyntaxError: with the byte offset and what was expected.
    """
    parser = _Parser(_tokenize(text))
    expr = parser.parse_expr()
    tok = parser.peek()
    if tok.kind != "EOF":
        raise QuerySyntaxError(f"unexpected trailing input {_describe(tok)}", tok.offset)
    return expr


# --- printer ---

def _print_literal(value: ScalarValue) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + "".join(_PRINT_ESCAPES.get(c, c) for c in value) + '"'
    s = repr(float(value))
    return s[:-2] if s.endswith(".0") else s


def print_expr(expr: QueryExpr) -> str:
    """Canonical, fully parenthesized serialization; parse(print_expr(e)) == e."""
    if isinstance(expr, Cmp):
        return f"({expr.field} {expr.op} {_print_literal(expr.literal)})"
    if isinstance(expr, Not):
        return f"!{print_expr(expr.child)}"
    if isinstance(expr, And):
        return "(" + " && ".join(print_expr(c) for c in expr.children) + ")"
    if isinstance(expr, Or):
        return "(" + " || ".join(print_expr(c) for c in expr.children) + ")"
    raise TypeError(f"not a query expression: {expr!r}")


# --- evaluator ---

def _eval_cmp(cmp: Cmp, doc: Mapping[str, ScalarValue]) -> bool:
    if cmp.field not in doc:
        return False
    value = doc[cmp.field]
    lit = cmp.literal
    # booleans are their own type: bool vs number is a cross-type mismatch
    if isinstance(value, bool) or isinstance(lit, bool):
        if not (isinstance(value, bool) and isinstance(lit, bool)):
            return False
        if cmp.op == "==":
            return value is lit
        if cmp.op == "!=":
            return value is not lit
        return False  # no ordering on booleans
    if isinstance(value, str) != isinstance(lit, str):
        return False
    if cmp.op == "==":
        return value == lit
    if cmp.op == "!=":
        return value != lit
    if cmp.op == "<":
        return value < lit
    if cmp.op == "<=":
        return value <= lit
    if cmp.op == ">":
        return value > lit
    if cmp.op == ">=":
        return value >= lit
    raise TypeError(f"not a comparison operator: {cmp.op!r}")


def evaluate(expr: QueryExpr, doc: Mapping[str, ScalarValue]) -> bool:
    """Truth value of ``expr`` against a document's fields; never raises."""
    if isinstance(expr, Cmp):
        return _eval_cmp(expr, doc)
    if isinstance(expr, Not):
        return not evaluate(expr.child, doc)
    if isinstance(expr, And):
        return all(evaluate(c, doc) for c in expr.children)
    if isinstance(expr, Or):
        return any(evaluate(c, doc) for c in expr.children)
    raise TypeError(f"not a query expression: {expr!r}")


def fields_referenced(expr: QueryExpr) -> set[str]:
    """All field names appearing in comparison leaves."""
    if isinstance(expr, Cmp):
        return {expr.field}
    if isinstance(expr, Not):
        return fields_referenced(expr.child)
    out: set[str] = set()
    for child in expr.children:
        out |= fields_referenced(child)
    return out


def quote_string(value: str) -> str:
    """Quote ``value`` as a DSL string literal (used to build filters)."""
    return _print_literal(value)
