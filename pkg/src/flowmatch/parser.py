"""Recursive-descent parser for the transform-program concrete syntax.

One unit per line; ``#`` starts a comment. A ``groupby`` line is only legal
immediately before a ``rollup`` line and is fused into it at parse time, so
parsed programs never contain a standalone groupby.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError
from .expressions import (
    FUNCTIONS,
    Binary,
    Call,
    ColumnRef,
    Expression,
    Literal,
    Unary,
    referenced_columns,
)
from .transforms import (
    AGGREGATIONS,
    IMPUTE_STRATEGIES,
    VERBS,
    DedupeUnit,
    DeriveUnit,
    FilterUnit,
    ImputeUnit,
    OrderByUnit,
    RollupUnit,
    TransformProgram,
    TransformUnit,
)

_KEYWORDS = {"and", "or", "not", "true", "false", "with", "asc", "desc"}
_SYMBOLS = ("==", "!=", "<=", ">=", "<", ">", "+", "-", "*", "/", "(", ")", ",", "=")


@dataclass(frozen=True)
class Token:
    kind: str  # ident | int | float | string | sym | end
    text: str
    line: int
    column: int
    value: object = None


def _tokenize_line(text: str, line_no: int) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in " \t":
            i += 1
            continue
        if ch == "#":
            break
        col = i + 1
        if ch == '"':
            j = i + 1
            chunks = []
            while j < n:
                if text[j] == "\\" and j + 1 < n:
                    esc = text[j + 1]
                    chunks.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc, esc))
                    j += 2
                    continue
                if text[j] == '"':
                    break
                chunks.append(text[j])
                j += 1
            else:
                raise ParseError("unterminated string literal", line_no, col)
            if j >= n:
                raise ParseError("unterminated string literal", line_no, col)
            tokens.append(Token("string", text[i : j + 1], line_no, col, "".join(chunks)))
            i = j + 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            seen_exp = False
            while j < n:
                c = text[j]
                if c.isdigit():
                    j += 1
                elif c == "." and not seen_dot and not seen_exp:
                    seen_dot = True
                    j += 1
                elif c in "eE" and not seen_exp and j > i:
                    seen_exp = True
                    j += 1
                    if j < n and text[j] in "+-":
                        j += 1
                else:
                    break
            raw = text[i:j]
            try:
                if seen_dot or seen_exp:
                    tokens.append(Token("float", raw, line_no, col, float(raw)))
                else:
                    tokens.append(Token("int", raw, line_no, col, int(raw)))
            except ValueError:
                raise ParseError(f"bad number literal '{raw}'", line_no, col) from None
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("ident", text[i:j], line_no, col))
            i = j
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(Token("sym", sym, line_no, col))
                i += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", line_no, col)
    tokens.append(Token("end", "", line_no, len(text) + 1))
    return tokens


class _LineParser:
    def __init__(self, tokens: list[Token], line_no: int):
        self.tokens = tokens
        self.pos = 0
        self.line_no = line_no

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "end":
            self.pos += 1
        return tok

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.column)

    def expect_sym(self, sym: str) -> Token:
        tok = self.peek()
        if tok.kind != "sym" or tok.text != sym:
            self.fail(f"expected '{sym}'")
        return self.next()

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.kind != "ident" or tok.text in _KEYWORDS:
            self.fail(f"expected {what}")
        return self.next()

    def expect_end(self):
        tok = self.peek()
        if tok.kind != "end":
            self.fail(f"unexpected trailing input '{tok.text}'")

    def at_sym(self, sym: str) -> bool:
        tok = self.peek()
        return tok.kind == "sym" and tok.text == sym

    def at_word(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text == word

    # expression grammar: or > and > not > comparison > additive > term > unary > primary
    def parse_expr(self) -> Expression:
        return self._parse_or()

    def _parse_or(self) -> Expression:
        left = self._parse_and()
        while self.at_word("or"):
            self.next()
            left = Binary("or", left, self._parse_and())
        return left

    def _parse_and(self) -> Expression:
        left = self._parse_not()
        while self.at_word("and"):
            self.next()
            left = Binary("and", left, self._parse_not())
        return left

    def _parse_not(self) -> Expression:
        if self.at_word("not"):
            self.next()
            return Unary("not", self._parse_not())
        return self._parse_comparison()

    def _parse_comparison(self) -> Expression:
        left = self._parse_additive()
        tok = self.peek()
        if tok.kind == "sym" and tok.text in ("==", "!=", "<", "<=", ">", ">="):
            self.next()
            return Binary(tok.text, left, self._parse_additive())
        return left

    def _parse_additive(self) -> Expression:
        left = self._parse_term()
        while True:
            tok = self.peek()
            if tok.kind == "sym" and tok.text in ("+", "-"):
                self.next()
                left = Binary(tok.text, left, self._parse_term())
            else:
                return left

    def _parse_term(self) -> Expression:
        left = self._parse_unary()
        while True:
            tok = self.peek()
            if tok.kind == "sym" and tok.text in ("*", "/"):
                self.next()
                left = Binary(tok.text, left, self._parse_unary())
            else:
                return left

    def _parse_unary(self) -> Expression:
        if self.at_sym("-"):
            self.next()
            return Unary("neg", self._parse_unary())
        return self._parse_primary()

    def _parse_primary(self) -> Expression:
        tok = self.peek()
        if tok.kind in ("int", "float", "string"):
            self.next()
            return Literal(tok.value)
        if tok.kind == "sym" and tok.text == "(":
            self.next()
            inner = self.parse_expr()
            self.expect_sym(")")
            return inner
        if tok.kind == "ident":
            if tok.text == "true":
                self.next()
                return Literal(True)
            if tok.text == "false":
                self.next()
                return Literal(False)
            if tok.text in _KEYWORDS:
                self.fail(f"unexpected keyword '{tok.text}' in expression")
            self.next()
            if self.at_sym("("):
                if tok.text not in FUNCTIONS:
                    self.fail(f"unknown function '{tok.text}'", tok)
                self.next()
                args = []
                if not self.at_sym(")"):
                    args.append(self.parse_expr())
                    while self.at_sym(","):
                        self.next()
                        args.append(self.parse_expr())
                self.expect_sym(")")
                if len(args) != FUNCTIONS[tok.text]:
                    self.fail(
                        f"{tok.text} takes {FUNCTIONS[tok.text]} argument(s), got {len(args)}", tok
                    )
                return Call(tok.text, tuple(args))
            return ColumnRef(tok.text)
        if tok.kind == "end":
            self.fail("expected expression before end of line")
        self.fail(f"unexpected token '{tok.text}'")

    def parse_name_list(self) -> tuple[str, ...]:
        names = [self.expect_ident("column name").text]
        while self.at_sym(","):
            self.next()
            names.append(self.expect_ident("column name").text)
        return tuple(names)

    def parse_literal(self):
        tok = self.peek()
        if tok.kind in ("int", "float", "string"):
            self.next()
            return tok.value
        if tok.kind == "ident" and tok.text in ("true", "false"):
            self.next()
            return tok.text == "true"
        if tok.kind == "sym" and tok.text == "-":
            self.next()
            num = self.peek()
            if num.kind in ("int", "float"):
                self.next()
                return -num.value
            self.fail("expected number after '-'")
        self.fail("expected literal")


def _require_column_use(expr: Expression, verb: str, line_no: int):
    if not referenced_columns(expr):
        raise ParseError(f"{verb} expression references no columns", line_no, 1)


def _parse_groupby(p: _LineParser) -> tuple[str, ...]:
    keys = p.parse_name_list()
    p.expect_end()
    return keys


def _parse_rollup(p: _LineParser, group_keys: tuple[str, ...]) -> RollupUnit:
    aggs = []
    while True:
        out = p.expect_ident("output name").text
        p.expect_sym("=")
        agg_tok = p.expect_ident("aggregation")
        if agg_tok.text not in AGGREGATIONS:
            p.fail(f"unknown aggregation '{agg_tok.text}'", agg_tok)
        p.expect_sym("(")
        col = p.expect_ident("column name").text
        p.expect_sym(")")
        aggs.append((out, agg_tok.text, col))
        if p.at_sym(","):
            p.next()
            continue
        break
    p.expect_end()
    return RollupUnit(group_keys, tuple(aggs))


def _parse_unit_line(p: _LineParser, line_no: int) -> TransformUnit | tuple[str, ...]:
    verb_tok = p.next()
    if verb_tok.kind != "ident":
        p.fail("expected a transform verb", verb_tok)
    verb = verb_tok.text
    if verb not in VERBS:
        raise ParseError(f"unknown verb '{verb}'", line_no, verb_tok.column)

    if verb == "derive":
        name = p.expect_ident("output column name").text
        p.expect_sym("=")
        expr = p.parse_expr()
        p.expect_end()
        _require_column_use(expr, "derive", line_no)
        return DeriveUnit(name, expr)
    if verb == "filter":
        expr = p.parse_expr()
        p.expect_end()
        _require_column_use(expr, "filter", line_no)
        return FilterUnit(expr)
    if verb == "groupby":
        return _parse_groupby(p)
    if verb == "rollup":
        p.fail("rollup without an immediately preceding groupby", verb_tok)
    if verb == "dedupe":
        keys = p.parse_name_list()
        p.expect_end()
        return DedupeUnit(keys)
    if verb == "impute":
        target = p.expect_ident("column name").text
        with_tok = p.next()
        if with_tok.kind != "ident" or with_tok.text != "with":
            p.fail("expected 'with'", with_tok)
        strat_tok = p.expect_ident("strategy")
        if strat_tok.text not in IMPUTE_STRATEGIES:
            p.fail(f"unknown impute strategy '{strat_tok.text}'", strat_tok)
        constant = None
        if strat_tok.text == "constant":
            p.expect_sym("(")
            constant = p.parse_literal()
            p.expect_sym(")")
        p.expect_end()
        return ImputeUnit(target, strat_tok.text, constant)
    # orderby
    keys = []
    while True:
        name = p.expect_ident("column name").text
        ascending = True
        if p.at_word("asc"):
            p.next()
        elif p.at_word("desc"):
            p.next()
            ascending = False
        keys.append((name, ascending))
        if p.at_sym(","):
            p.next()
            continue
        break
    p.expect_end()
    return OrderByUnit(tuple(keys))


def parse_program(text: str) -> TransformProgram:
    """Parse program source; rendering the result re-parses identically."""
    units: list[TransformUnit] = []
    pending_groupby: tuple[tuple[str, ...], int] | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        p = _LineParser(_tokenize_line(raw, line_no), line_no)
        first = p.peek()
        if pending_groupby is not None:
            if first.kind != "ident" or first.text != "rollup":
                raise ParseError(
                    "groupby must be immediately followed by rollup", pending_groupby[1], 1
                )
            p.next()
            units.append(_parse_rollup(p, pending_groupby[0]))
            pending_groupby = None
            continue
        parsed = _parse_unit_line(p, line_no)
        if isinstance(parsed, tuple):
            pending_groupby = (parsed, line_no)
        else:
            units.append(parsed)
    if pending_groupby is not None:
        raise ParseError("groupby must be immediately followed by rollup", pending_groupby[1], 1)
    return TransformProgram(tuple(units))


def parse_expression(text: str) -> Expression:
    """Parse a single expression (used by unit documents)."""
    p = _LineParser(_tokenize_line(text, 1), 1)
    expr = p.parse_expr()
    p.expect_end()
    return expr
