"""Columnar tables, cell-value semantics, and approximate column equality.

Cells are plain Python values: ``int``, ``float``, ``str``, ``bool``, or
``None`` for missing. Float NaN never survives construction; it is folded
into missing so "missing matches missing" has a single code path. Text is
normalized to Unicode NFC, after which comparison is byte-exact.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import unicodedata
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .errors import IngestionError, SchemaError

NUMBER = "number"
INTEGER = "integer"
TEXT = "text"
BOOLEAN = "boolean"

DTYPES = (NUMBER, INTEGER, TEXT, BOOLEAN)

# integer and number share one comparison class: 1 and 1.0 are the same cell.
_KIND_CLASS = {NUMBER: "numeric", INTEGER: "numeric", TEXT: "text", BOOLEAN: "boolean"}


def kind_class(dtype: str) -> str:
    return _KIND_CLASS[dtype]


def normalize_value(value):
    """Canonical cell form: NaN becomes missing, text becomes NFC."""
    if value is None:
        return None
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, str):
        return unicodedata.normalize("NFC", value)
    return value


@dataclass(frozen=True)
class ToleranceSpec:
    """Numeric comparison margin: |x - y| <= abs_tol + rel_tol * max(|x|, |y|)."""

    abs_tol: float = 1e-9
    rel_tol: float = 1e-9


DEFAULT_TOLERANCE = ToleranceSpec()
ZERO_TOLERANCE = ToleranceSpec(0.0, 0.0)


@dataclass(frozen=True)
class Column:
    """An immutable named vector of cells with a declared dtype."""

    name: str
    values: tuple
    dtype: str

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise SchemaError(f"unknown dtype '{self.dtype}'")
        object.__setattr__(self, "values", tuple(_conform(v, self.dtype) for v in self.values))

    def __len__(self) -> int:
        return len(self.values)


def _conform(value, dtype: str):
    value = normalize_value(value)
    if value is None:
        return None
    if dtype == INTEGER:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"value {value!r} does not conform to dtype integer")
        return value
    if dtype == NUMBER:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"value {value!r} does not conform to dtype number")
        return float(value)
    if dtype == BOOLEAN:
        if not isinstance(value, bool):
            raise SchemaError(f"value {value!r} does not conform to dtype boolean")
        return value
    if not isinstance(value, str):
        raise SchemaError(f"value {value!r} does not conform to dtype text")
    return value


def infer_dtype(values: Iterable) -> str:
    """Most specific dtype for already-normalized cells; text when empty."""
    present = [v for v in values if v is not None]
    if not present:
        return TEXT
    if all(isinstance(v, bool) for v in present):
        return BOOLEAN
    if all(isinstance(v, int) and not isinstance(v, bool) for v in present):
        return INTEGER
    if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in present):
        return NUMBER
    return TEXT


def make_column(name: str, values: Iterable) -> Column:
    """Build a column, inferring the dtype from the (normalized) values."""
    cells = tuple(normalize_value(v) for v in values)
    return Column(name, cells, infer_dtype(cells))


@dataclass(frozen=True)
class DataTable:
    """An ordered collection of equal-length columns with unique names."""

    columns: tuple[Column, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaError(f"duplicate column names: {sorted(dupes)}")
        lengths = {len(c) for c in self.columns}
        if len(lengths) > 1:
            raise SchemaError(f"columns have unequal lengths: {sorted(lengths)}")
        object.__setattr__(self, "_by_name", {c.name: c for c in self.columns})

    @property
    def row_count(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> Column:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"no column named '{name}'") from None

    def has_column(self, name: str) -> bool:
        return name in self._by_name

    def rows(self) -> Iterator[tuple]:
        return zip(*(c.values for c in self.columns)) if self.columns else iter(())

    def schema(self) -> tuple[tuple[str, str], ...]:
        return tuple((c.name, c.dtype) for c in self.columns)


def _parse_cell(text: str, dtype: str, row: int, name: str):
    if text == "":
        return None
    if dtype == TEXT:
        return text
    if dtype == BOOLEAN:
        low = text.strip().lower()
        if low == "true":
            return True
        if low == "false":
            return False
        raise IngestionError(f"cell '{text}' in boolean column '{name}'", row=row)
    try:
        if dtype == INTEGER:
            return int(text.strip())
        value = float(text.strip())
    except ValueError:
        raise IngestionError(f"cell '{text}' in {dtype} column '{name}'", row=row) from None
    return value


def _looks_like(text: str, dtype: str) -> bool:
    stripped = text.strip()
    if dtype == BOOLEAN:
        return stripped.lower() in ("true", "false")
    try:
        if dtype == INTEGER:
            int(stripped)
        else:
            float(stripped)
    except ValueError:
        return False
    return True


def load_table(source: bytes | str | IO[bytes], schema: dict[str, str] | None = None) -> DataTable:
    """Parse RFC-4180-style comma-separated text with a header row.

    Dtypes are inferred per column (boolean, then integer, number, text
    fallback) unless overridden via ``schema``. Empty cells become missing;
    numeric NaN cells are folded into missing.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8-sig")
    elif isinstance(source, str):
        text = source.lstrip("﻿")
    else:
        text = source.read().decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise IngestionError("input has no header row") from None
    seen = set()
    for name in header:
        if name in seen:
            raise SchemaError(f"duplicate header name '{name}'")
        seen.add(name)
    width = len(header)
    raw_rows = []
    for i, row in enumerate(reader, start=1):
        if len(row) != width:
            raise IngestionError(
                f"row {i} has {len(row)} fields, expected {width}", row=i
            )
        raw_rows.append(row)

    schema = schema or {}
    for name, dtype in schema.items():
        if dtype not in DTYPES:
            raise SchemaError(f"unknown dtype '{dtype}' for column '{name}'")

    columns = []
    for j, name in enumerate(header):
        cells = [r[j] for r in raw_rows]
        if name in schema:
            dtype = schema[name]
        else:
            present = [c for c in cells if c != ""]
            if present and all(_looks_like(c, BOOLEAN) for c in present):
                dtype = BOOLEAN
            elif present and all(_looks_like(c, INTEGER) for c in present):
                dtype = INTEGER
            elif present and all(_looks_like(c, NUMBER) for c in present):
                dtype = NUMBER
            else:
                dtype = TEXT
        parsed = [_parse_cell(c, dtype, i, name) for i, c in enumerate(cells, start=1)]
        columns.append(Column(name, tuple(parsed), dtype))
    return DataTable(tuple(columns))


def render_cell(value) -> str:
    """Shortest round-trip text for one cell; missing renders empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(table: DataTable) -> bytes:
    """Serialize a table back to delimited text (inverse of load_table)."""
    out = io.StringIO(newline="")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(table.column_names)
    for row in table.rows():
        rendered = [render_cell(v) for v in row]
        if rendered == [""]:
            out.write('""\n')  # a bare empty line would read back as no record
        else:
            writer.writerow(rendered)
    return out.getvalue().encode("utf-8")


def values_equal(a, b, tol: ToleranceSpec) -> bool:
    """Cell-level equality: missing matches only missing, numbers within tol."""
    if a is None or b is None:
        return a is None and b is None
    a_bool = isinstance(a, bool)
    b_bool = isinstance(b, bool)
    if a_bool or b_bool:
        return a_bool and b_bool and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        if a == b:
            return True
        x, y = float(a), float(b)
        if math.isinf(x) or math.isinf(y):
            return x == y
        return abs(x - y) <= tol.abs_tol + tol.rel_tol * max(abs(x), abs(y))
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    return False


def column_equal(a: Column, b: Column, tol: ToleranceSpec = DEFAULT_TOLERANCE) -> bool:
    """True iff lengths agree and every position matches under ``tol``.

    Reflexive and symmetric for a fixed tol; NOT transitive, since
    tolerance chains can bridge values that are individually too far apart.
    """
    if len(a) != len(b):
        return False
    return all(values_equal(x, y, tol) for x, y in zip(a.values, b.values))


# Fingerprint quantization is deliberately much coarser than the comparison
# tolerance so that tolerance-equal columns land in the same bucket. Values
# sitting within tol of a bucket boundary can still split; callers must not
# use unequal digests to rule out equality of float-bearing columns.
_SNAP_FACTOR = 1000.0
_SIG_DIGITS = 6


def quantize_value(value, tol: ToleranceSpec):
    """Bucket representative used by fingerprint; missing maps to itself."""
    if value is None:
        return None
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        try:
            x = float(value)
        except OverflowError:
            return repr(value)
        if math.isinf(x):
            return x
        if abs(x) <= tol.abs_tol * _SNAP_FACTOR:
            return 0.0
        quantized = float(f"{x:.{_SIG_DIGITS}e}")
        return 0.0 if quantized == 0.0 else quantized
    return value


def quantized_cells(c: Column, tol: ToleranceSpec) -> tuple:
    return tuple(quantize_value(v, tol) for v in c.values)


def fingerprint(c: Column, tol: ToleranceSpec = DEFAULT_TOLERANCE) -> str:
    """Lowercase hex digest over length, kind class, and quantized cells.

    One-way with respect to column_equal: equal columns produce equal
    digests (up to the boundary caveat above); unequal digests make
    equality overwhelmingly unlikely but are not proof against it.
    """
    h = hashlib.sha256()
    h.update(f"{len(c)}|{kind_class(c.dtype)}".encode())
    for v in quantized_cells(c, tol):
        if v is None:
            h.update(b"|~")
        elif isinstance(v, bool):
            h.update(b"|b" + (b"1" if v else b"0"))
        elif isinstance(v, float):
            h.update(b"|f" + repr(v).encode())
        else:
            h.update(b"|t" + v.encode("utf-8"))
    return h.hexdigest()


def _cell_key(v):
    if v is None:
        return ("_",)
    if isinstance(v, bool):
        return ("b", v)
    if isinstance(v, (int, float)):
        # int 1 and float 1.0 are the same cell at zero tolerance
        try:
            return ("n", float(v))
        except OverflowError:
            return ("n", v)
    return ("t", v)


def exact_key(c: Column) -> tuple:
    """Hashable identity for zero-tolerance content equality (name ignored)."""
    return (kind_class(c.dtype), len(c), tuple(_cell_key(v) for v in c.values))
