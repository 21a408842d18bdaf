"""Transform units, program execution, and per-step provenance traces.

Each unit is one discrete wrangling decision over a table. A program runs
left to right, producing a fresh table per step plus a StepTrace recording
which column identities the step consumed and produced. Identities are
plain integers: the original columns take 0..n-1 in table order and every
produced column gets the next free integer, so a rerun of the same program
over the same table reproduces identical traces.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

from .errors import EvalError, ProgramError, TypeMismatchError, UnknownColumnError
from .expressions import (
    Expression,
    eval_expression,
    referenced_columns,
    render_expression,
)
from .table import BOOLEAN, Column, DataTable, infer_dtype, kind_class, make_column

VERBS = ("derive", "filter", "groupby", "dedupe", "impute", "rollup", "orderby")

AGGREGATIONS = ("sum", "mean", "median", "min", "max", "count")
IMPUTE_STRATEGIES = ("mean", "median", "mode", "constant")


class TransformUnit:
    """Base class; concrete units carry verb-specific parameters."""

    verb: str = ""

    def param_columns(self) -> tuple[str, ...]:
        """Column names forming the unit's decision parameters (I(t))."""
        raise NotImplementedError

    def render(self) -> str:
        raise NotImplementedError

    def to_doc(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class DeriveUnit(TransformUnit):
    out_name: str
    expr: Expression
    verb = "derive"

    def param_columns(self):
        return referenced_columns(self.expr)

    def render(self):
        return f"derive {self.out_name} = {render_expression(self.expr)}"

    def to_doc(self):
        return {"verb": "derive", "params": {"out": self.out_name, "expr": render_expression(self.expr)}}


@dataclass(frozen=True)
class FilterUnit(TransformUnit):
    predicate: Expression
    verb = "filter"

    def param_columns(self):
        return referenced_columns(self.predicate)

    def render(self):
        return f"filter {render_expression(self.predicate)}"

    def to_doc(self):
        return {"verb": "filter", "params": {"predicate": render_expression(self.predicate)}}


@dataclass(frozen=True)
class DedupeUnit(TransformUnit):
    keys: tuple[str, ...]
    verb = "dedupe"

    def param_columns(self):
        return self.keys

    def render(self):
        return "dedupe " + ", ".join(self.keys)

    def to_doc(self):
        return {"verb": "dedupe", "params": {"keys": list(self.keys)}}


@dataclass(frozen=True)
class ImputeUnit(TransformUnit):
    target: str
    strategy: str  # mean | median | mode | constant
    constant: object = None
    verb = "impute"

    def param_columns(self):
        return (self.target,)

    def render(self):
        if self.strategy == "constant":
            from .expressions import Literal

            return f"impute {self.target} with constant({render_expression(Literal(self.constant))})"
        return f"impute {self.target} with {self.strategy}"

    def to_doc(self):
        params = {"target": self.target, "strategy": self.strategy}
        if self.strategy == "constant":
            params["constant"] = self.constant
        return {"verb": "impute", "params": params}


@dataclass(frozen=True)
class RollupUnit(TransformUnit):
    """A groupby/rollup pair fused into the single decision it represents."""

    group_keys: tuple[str, ...]
    aggregations: tuple[tuple[str, str, str], ...]  # (out_name, agg, in_column)
    verb = "rollup"

    def param_columns(self):
        names = list(self.group_keys)
        for _, _, col in self.aggregations:
            if col not in names:
                names.append(col)
        return tuple(names)

    def render(self):
        aggs = ", ".join(f"{out} = {agg}({col})" for out, agg, col in self.aggregations)
        return f"groupby {', '.join(self.group_keys)}\nrollup {aggs}"

    def to_doc(self):
        return {
            "verb": "rollup",
            "params": {
                "group_keys": list(self.group_keys),
                "aggregations": [
                    {"out": out, "agg": agg, "column": col} for out, agg, col in self.aggregations
                ],
            },
        }


@dataclass(frozen=True)
class OrderByUnit(TransformUnit):
    keys: tuple[tuple[str, bool], ...]  # (column, ascending)
    verb = "orderby"

    def param_columns(self):
        return tuple(col for col, _ in self.keys)

    def render(self):
        parts = [f"{col} {'asc' if asc else 'desc'}" for col, asc in self.keys]
        return "orderby " + ", ".join(parts)

    def to_doc(self):
        return {
            "verb": "orderby",
            "params": {"keys": [{"column": c, "ascending": a} for c, a in self.keys]},
        }


def unit_from_doc(doc: dict) -> TransformUnit:
    """Rebuild a unit from its {verb, params} document form."""
    from .parser import parse_expression

    verb = doc.get("verb")
    params = doc.get("params", {})
    if verb == "derive":
        return DeriveUnit(params["out"], parse_expression(params["expr"]))
    if verb == "filter":
        return FilterUnit(parse_expression(params["predicate"]))
    if verb == "dedupe":
        return DedupeUnit(tuple(params["keys"]))
    if verb == "impute":
        return ImputeUnit(
            params["target"], params["strategy"], params.get("constant")
        )
    if verb == "rollup":
        return RollupUnit(
            tuple(params["group_keys"]),
            tuple((a["out"], a["agg"], a["column"]) for a in params["aggregations"]),
        )
    if verb == "orderby":
        return OrderByUnit(tuple((k["column"], bool(k["ascending"])) for k in params["keys"]))
    raise EvalError(f"unknown verb in unit document: {verb!r}")


@dataclass(frozen=True)
class TransformProgram:
    units: tuple[TransformUnit, ...]

    def render(self) -> str:
        return "\n".join(u.render() for u in self.units) + ("\n" if self.units else "")

    def to_doc(self) -> list[dict]:
        return [u.to_doc() for u in self.units]


def program_from_doc(doc: list[dict]) -> TransformProgram:
    return TransformProgram(tuple(unit_from_doc(d) for d in doc))


@dataclass(frozen=True)
class StepTrace:
    """Provenance for one executed unit.

    ``inputs`` are the identities the unit's decision consumed; ``outputs``
    pairs each produced identity with its column name. ``result`` snapshots
    exactly the produced columns, in ``outputs`` order.
    """

    unit: TransformUnit
    inputs: tuple[int, ...]
    outputs: tuple[tuple[int, str], ...]
    result: DataTable

    def __post_init__(self):
        if not self.inputs or not self.outputs:
            raise EvalError(f"{self.unit.verb} trace violates |I|>0, |O|>=1")

    def output_column(self, pointer_id: int) -> Column:
        for (pid, _), col in zip(self.outputs, self.result.columns):
            if pid == pointer_id:
                return col
        raise EvalError(f"pointer {pointer_id} not produced by this step")


class _IdAllocator:
    def __init__(self, start: int):
        self.next_id = start

    def take(self) -> int:
        v = self.next_id
        self.next_id += 1
        return v


def _require_columns(table: DataTable, names) -> None:
    for name in names:
        if not table.has_column(name):
            raise UnknownColumnError(name)


def _replace_or_append(table: DataTable, column: Column) -> DataTable:
    cols = list(table.columns)
    for i, c in enumerate(cols):
        if c.name == column.name:
            cols[i] = column
            return DataTable(tuple(cols))
    cols.append(column)
    return DataTable(tuple(cols))


def _select_rows(table: DataTable, indexes: list[int]) -> DataTable:
    return DataTable(
        tuple(
            Column(c.name, tuple(c.values[i] for i in indexes), c.dtype)
            for c in table.columns
        )
    )


def _numeric_only(values, what: str, column: str) -> list:
    out = [v for v in values if v is not None]
    for v in out:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise TypeMismatchError(f"{what} on non-numeric column '{column}'")
    return out


def _aggregate(agg: str, column: Column) -> object:
    present = [v for v in column.values if v is not None]
    if agg == "count":
        return len(present)
    if agg in ("sum", "mean", "median"):
        nums = _numeric_only(column.values, f"rollup {agg}", column.name)
        if not nums:
            return None
        if agg == "sum":
            return sum(nums)
        if agg == "mean":
            return sum(nums) / len(nums)
        return statistics.median(nums)
    # min / max: numeric or text
    if not present:
        return None
    if kind_class(column.dtype) == "boolean":
        raise TypeMismatchError(f"rollup {agg} on boolean column '{column.name}'")
    return min(present) if agg == "min" else max(present)


def _impute_fill(column: Column, unit: ImputeUnit) -> object:
    present = [v for v in column.values if v is not None]
    if unit.strategy == "constant":
        return unit.constant
    if not present:
        raise EvalError(f"impute {unit.strategy}: column '{column.name}' has no values")
    if unit.strategy in ("mean", "median"):
        nums = _numeric_only(column.values, f"impute {unit.strategy}", column.name)
        return sum(nums) / len(nums) if unit.strategy == "mean" else statistics.median(nums)
    # mode: highest count, earliest first occurrence on ties
    counts: dict = {}
    for v in present:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    for v in present:
        if counts[v] == best:
            return v
    raise AssertionError("unreachable")


def _sorted_indexes(table: DataTable, keys) -> list[int]:
    indexes = list(range(table.row_count))
    # least-significant key first; stability composes the multi-key order
    for name, ascending in reversed(keys):
        col = table.column(name)
        present = [i for i in indexes if col.values[i] is not None]
        absent = [i for i in indexes if col.values[i] is None]
        present.sort(key=lambda i: col.values[i], reverse=not ascending)
        indexes = present + absent
    return indexes


def apply_unit(
    table: DataTable,
    unit: TransformUnit,
    env: dict[str, int] | None = None,
    ids: _IdAllocator | None = None,
) -> tuple[DataTable, StepTrace]:
    """Run one unit; returns the new table and its provenance trace.

    ``env``/``ids`` thread column identities through a program run; when
    omitted, the table's columns take identities 0..n-1.
    """
    if env is None:
        env = {name: i for i, name in enumerate(table.column_names)}
    if ids is None:
        ids = _IdAllocator(len(table.columns))

    def fresh_all(new_table: DataTable, inputs: tuple[int, ...]) -> tuple[DataTable, StepTrace]:
        outputs = tuple((ids.take(), c.name) for c in new_table.columns)
        env.clear()
        env.update({name: pid for pid, name in outputs})
        return new_table, StepTrace(unit, inputs, outputs, new_table)

    if isinstance(unit, DeriveUnit):
        _require_columns(table, unit.param_columns())
        inputs = tuple(env[n] for n in unit.param_columns())
        column = eval_expression(unit.expr, table, unit.out_name)
        new_table = _replace_or_append(table, column)
        pid = ids.take()
        env[unit.out_name] = pid
        trace = StepTrace(unit, inputs, ((pid, unit.out_name),), DataTable((column,)))
        return new_table, trace

    if isinstance(unit, FilterUnit):
        _require_columns(table, unit.param_columns())
        inputs = tuple(env[n] for n in unit.param_columns())
        predicate = eval_expression(unit.predicate, table, "_pred")
        if predicate.dtype != BOOLEAN:
            raise TypeMismatchError(f"filter predicate is {predicate.dtype}, not boolean")
        keep = [i for i, v in enumerate(predicate.values) if v is True]
        return fresh_all(_select_rows(table, keep), inputs)

    if isinstance(unit, DedupeUnit):
        _require_columns(table, unit.keys)
        inputs = tuple(env[n] for n in unit.keys)
        cols = [table.column(n) for n in unit.keys]
        seen = set()
        keep = []
        for i in range(table.row_count):
            key = tuple(c.values[i] for c in cols)
            if key not in seen:
                seen.add(key)
                keep.append(i)
        return fresh_all(_select_rows(table, keep), inputs)

    if isinstance(unit, ImputeUnit):
        _require_columns(table, [unit.target])
        inputs = (env[unit.target],)
        col = table.column(unit.target)
        fill = _impute_fill(col, unit)
        if unit.strategy == "constant" and any(v is not None for v in col.values):
            if kind_class(infer_dtype([fill])) != kind_class(col.dtype):
                raise TypeMismatchError(
                    f"impute constant {unit.constant!r} does not fit column '{unit.target}' ({col.dtype})"
                )
        filled = make_column(unit.target, tuple(fill if v is None else v for v in col.values))
        new_table = _replace_or_append(table, filled)
        pid = ids.take()
        env[unit.target] = pid
        trace = StepTrace(unit, inputs, ((pid, unit.target),), DataTable((filled,)))
        return new_table, trace

    if isinstance(unit, RollupUnit):
        _require_columns(table, unit.param_columns())
        inputs = tuple(env[n] for n in unit.param_columns())
        key_cols = [table.column(n) for n in unit.group_keys]
        groups: dict[tuple, list[int]] = {}
        for i in range(table.row_count):
            key = tuple(c.values[i] for c in key_cols)
            groups.setdefault(key, []).append(i)
        out_names = list(unit.group_keys) + [out for out, _, _ in unit.aggregations]
        if len(set(out_names)) != len(out_names):
            raise EvalError("rollup output names collide with group keys")
        new_cols = []
        for j, name in enumerate(unit.group_keys):
            new_cols.append(make_column(name, tuple(key[j] for key in groups)))
        for out, agg, col_name in unit.aggregations:
            if agg not in AGGREGATIONS:
                raise EvalError(f"unknown aggregation '{agg}'")
            source = table.column(col_name)
            values = tuple(
                _aggregate(agg, Column(source.name, tuple(source.values[i] for i in rows), source.dtype))
                for rows in groups.values()
            )
            new_cols.append(make_column(out, values))
        return fresh_all(DataTable(tuple(new_cols)), inputs)

    if isinstance(unit, OrderByUnit):
        _require_columns(table, unit.param_columns())
        inputs = tuple(env[n] for n in unit.param_columns())
        return fresh_all(_select_rows(table, _sorted_indexes(table, unit.keys)), inputs)

    raise EvalError(f"unsupported unit {type(unit).__name__}")


def final_environment(table: DataTable, trace: list[StepTrace]) -> dict[str, int]:
    """Map each final-table column name to its column identity after a run."""
    env = {name: i for i, name in enumerate(table.column_names)}
    for step in trace:
        if step.unit.verb in ("derive", "impute"):
            pid, name = step.outputs[0]
            env[name] = pid
        else:
            env = {name: pid for pid, name in step.outputs}
    return env


def run_program(table: DataTable, program: TransformProgram) -> tuple[DataTable, list[StepTrace]]:
    """Fold apply_unit over the program; pure in (table, program)."""
    from .errors import EngineError

    env = {name: i for i, name in enumerate(table.column_names)}
    ids = _IdAllocator(len(table.columns))
    traces: list[StepTrace] = []
    current = table
    for index, unit in enumerate(program.units):
        try:
            current, trace = apply_unit(current, unit, env, ids)
        except EngineError as exc:
            raise ProgramError(index, exc) from exc
        traces.append(trace)
    return current, traces
