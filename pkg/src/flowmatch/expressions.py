"""Expression trees for derive/filter parameters, with row-wise evaluation.

The language is deliberately closed: column references, literals, ``not``
and unary minus, arithmetic, comparisons, ``and``/``or``, and the function
set {abs, log, exp, round, if_else, is_missing}. Any row where an operand
is missing evaluates to missing, except ``is_missing`` which observes it;
arithmetic faults (division by zero, log of a non-positive, overflow)
also yield missing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import TypeMismatchError, UnknownColumnError
from .table import BOOLEAN, INTEGER, NUMBER, TEXT, Column, DataTable, infer_dtype, kind_class

FUNCTIONS = {"abs": 1, "log": 1, "exp": 1, "round": 1, "if_else": 3, "is_missing": 1}

COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")
ARITHMETIC = ("+", "-", "*", "/")
BOOL_OPS = ("and", "or")


class Expression:
    """Marker base class for expression nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class ColumnRef(Expression):
    name: str


@dataclass(frozen=True)
class Literal(Expression):
    value: object  # int | float | str | bool


@dataclass(frozen=True)
class Unary(Expression):
    op: str  # "not" | "neg"
    operand: Expression


@dataclass(frozen=True)
class Binary(Expression):
    op: str
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Call(Expression):
    func: str
    args: tuple[Expression, ...]


def referenced_columns(expr: Expression) -> tuple[str, ...]:
    """Column names referenced by ``expr``, in first-appearance order."""
    out: list[str] = []

    def walk(node: Expression):
        if isinstance(node, ColumnRef):
            if node.name not in out:
                out.append(node.name)
        elif isinstance(node, Unary):
            walk(node.operand)
        elif isinstance(node, Binary):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Call):
            for a in node.args:
                walk(a)

    walk(expr)
    return tuple(out)


def _literal_dtype(value) -> str:
    if isinstance(value, bool):
        return BOOLEAN
    if isinstance(value, int):
        return INTEGER
    if isinstance(value, float):
        return NUMBER
    return TEXT


def _check_numeric(dtype: str, context: str):
    if kind_class(dtype) != "numeric":
        raise TypeMismatchError(f"{context} requires numbers, got {dtype}")


def _static_dtype(expr: Expression, table: DataTable) -> str:
    """Result dtype from operand dtypes; raises on rule violations."""
    if isinstance(expr, ColumnRef):
        if not table.has_column(expr.name):
            raise UnknownColumnError(expr.name)
        return table.column(expr.name).dtype
    if isinstance(expr, Literal):
        return _literal_dtype(expr.value)
    if isinstance(expr, Unary):
        inner = _static_dtype(expr.operand, table)
        if expr.op == "not":
            if inner != BOOLEAN:
                raise TypeMismatchError(f"'not' requires a boolean, got {inner}")
            return BOOLEAN
        _check_numeric(inner, "unary '-'")
        return inner
    if isinstance(expr, Binary):
        left = _static_dtype(expr.left, table)
        right = _static_dtype(expr.right, table)
        if expr.op in ARITHMETIC:
            _check_numeric(left, f"'{expr.op}'")
            _check_numeric(right, f"'{expr.op}'")
            if expr.op == "/":
                return NUMBER
            return INTEGER if left == INTEGER and right == INTEGER else NUMBER
        if expr.op in BOOL_OPS:
            if left != BOOLEAN or right != BOOLEAN:
                raise TypeMismatchError(f"'{expr.op}' requires booleans, got {left} and {right}")
            return BOOLEAN
        if expr.op in ("==", "!="):
            if kind_class(left) != kind_class(right):
                raise TypeMismatchError(f"cannot compare {left} with {right}")
            return BOOLEAN
        # ordering comparisons
        if kind_class(left) != kind_class(right) or kind_class(left) == "boolean":
            raise TypeMismatchError(f"cannot order {left} against {right}")
        return BOOLEAN
    if isinstance(expr, Call):
        args = [_static_dtype(a, table) for a in expr.args]
        if expr.func == "is_missing":
            return BOOLEAN
        if expr.func == "if_else":
            if args[0] != BOOLEAN:
                raise TypeMismatchError("if_else condition must be boolean")
            if kind_class(args[1]) != kind_class(args[2]):
                raise TypeMismatchError("if_else branches must share a kind")
            if args[1] == args[2]:
                return args[1]
            return NUMBER if kind_class(args[1]) == "numeric" else args[1]
        _check_numeric(args[0], expr.func)
        if expr.func == "round":
            return INTEGER
        if expr.func == "abs":
            return args[0]
        return NUMBER  # log, exp
    raise TypeMismatchError(f"unsupported expression node {type(expr).__name__}")


def _eval_cell(expr: Expression, table: DataTable, row: int):
    if isinstance(expr, ColumnRef):
        return table.column(expr.name).values[row]
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Unary):
        v = _eval_cell(expr.operand, table, row)
        if v is None:
            return None
        return (not v) if expr.op == "not" else -v
    if isinstance(expr, Binary):
        left = _eval_cell(expr.left, table, row)
        right = _eval_cell(expr.right, table, row)
        if left is None or right is None:
            return None
        op = expr.op
        if op == "+":
            return left + right
        if op == "-":
            return left - right
        if op == "*":
            return left * right
        if op == "/":
            return None if right == 0 else left / right
        if op == "and":
            return left and right
        if op == "or":
            return left or right
        if op == "==":
            return left == right
        if op == "!=":
            return left != right
        if op == "<":
            return left < right
        if op == "<=":
            return left <= right
        if op == ">":
            return left > right
        return left >= right
    # Call
    args = expr.args
    if expr.func == "is_missing":
        return _eval_cell(args[0], table, row) is None
    if expr.func == "if_else":
        cond = _eval_cell(args[0], table, row)
        if cond is None:
            return None
        return _eval_cell(args[1] if cond else args[2], table, row)
    v = _eval_cell(args[0], table, row)
    if v is None:
        return None
    try:
        if expr.func == "abs":
            return abs(v)
        if expr.func == "round":
            return round(v)
        if expr.func == "log":
            return math.log(v) if v > 0 else None
        return math.exp(v)
    except (ValueError, OverflowError):
        return None


def eval_expression(expr: Expression, table: DataTable, out_name: str = "_expr") -> Column:
    """Evaluate ``expr`` over every row, returning a fresh column.

    Typing is checked once against column dtypes before any row runs, so a
    rule violation raises even when the offending rows are all missing.
    """
    static = _static_dtype(expr, table)
    values = tuple(_eval_cell(expr, table, i) for i in range(table.row_count))
    inferred = infer_dtype(values)
    # all-missing results keep the statically determined dtype
    dtype = static if all(v is None for v in values) else inferred
    if kind_class(dtype) != kind_class(static):
        dtype = static
    return Column(out_name, values, dtype)


_PRECEDENCE = {
    "or": 1,
    "and": 2,
    "==": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6,
}
_UNARY_PRECEDENCE = {"not": 3, "neg": 7}


def render_expression(expr: Expression, parent_prec: int = 0) -> str:
    """Concrete syntax that re-parses to a structurally identical tree."""
    if isinstance(expr, ColumnRef):
        return expr.name
    if isinstance(expr, Literal):
        v = expr.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
        return repr(v)
    if isinstance(expr, Unary):
        prec = _UNARY_PRECEDENCE[expr.op]
        sym = "not " if expr.op == "not" else "-"
        inner = render_expression(expr.operand, prec)
        text = f"{sym}{inner}"
        return f"({text})" if prec < parent_prec else text
    if isinstance(expr, Binary):
        prec = _PRECEDENCE[expr.op]
        left = render_expression(expr.left, prec)
        # right operand binds tighter to keep left-associative reparse
        right = render_expression(expr.right, prec + 1)
        text = f"{left} {expr.op} {right}"
        return f"({text})" if prec < parent_prec else text
    args = ", ".join(render_expression(a) for a in expr.args)
    return f"{expr.func}({args})"
