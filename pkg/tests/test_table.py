import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowmatch.errors import IngestionError, SchemaError
from flowmatch.table import (
    DEFAULT_TOLERANCE,
    ZERO_TOLERANCE,
    Column,
    DataTable,
    ToleranceSpec,
    column_equal,
    fingerprint,
    load_table,
    make_column,
    quantized_cells,
    write_table,
)


class TestLoadTable:
    def test_direct_parse(self):
        table = load_table(b"a,b\n1,x\n")
        assert table.column("a").values == (1,)
        assert table.column("a").dtype == "integer"
        assert table.column("b").values == ("x",)
        assert table.column("b").dtype == "text"

    def test_empty_cell_becomes_missing(self):
        table = load_table(b"a,b\n1,\n2,3\n")
        assert table.column("b").values == (None, 3)

    def test_quoted_empty_single_column(self):
        table = load_table(b'a\n1\n""\n2\n')
        assert table.column("a").values == (1, None, 2)

    def test_ragged_row_reports_index(self):
        with pytest.raises(IngestionError) as err:
            load_table(b"a,b,c\n1,2,3\n4,5,6\n7,8\n")
        assert err.value.row == 3

    def test_duplicate_header(self):
        with pytest.raises(SchemaError):
            load_table(b"a,a\n1,2\n")

    def test_nan_cell_normalized_to_missing(self):
        table = load_table(b"a\n1.5\nnan\n")
        assert table.column("a").values == (1.5, None)
        assert table.column("a").dtype == "number"

    def test_boolean_inference(self):
        table = load_table(b'flag\ntrue\nfalse\n""\n')
        assert table.column("flag").values == (True, False, None)
        assert table.column("flag").dtype == "boolean"

    def test_schema_override(self):
        table = load_table(b"a\n1\n2\n", schema={"a": "text"})
        assert table.column("a").values == ("1", "2")

    def test_quoted_fields(self):
        table = load_table(b'a,b\n"1,5",x\n')
        assert table.column("a").values == ("1,5",)

    def test_mixed_numeric_widens_to_number(self):
        table = load_table(b"a\n1\n2.5\n")
        assert table.column("a").dtype == "number"
        assert table.column("a").values == (1.0, 2.5)


class TestColumnEqual:
    def test_within_default_tolerance(self):
        a = make_column("x", (1.0, 2.0))
        b = make_column("x", (1.0, 2.0 + 1e-12))
        assert column_equal(a, b, DEFAULT_TOLERANCE)

    def test_length_mismatch_is_nonmatch(self):
        assert not column_equal(make_column("x", (1, 2, 3)), make_column("x", (1, 2)))

    def test_missing_matches_only_missing(self):
        assert column_equal(make_column("x", ("a", None)), make_column("y", ("a", None)))
        assert not column_equal(make_column("x", (None,)), make_column("x", (0,)))

    def test_integer_column_equals_number_column(self):
        assert column_equal(make_column("x", (1, 2)), make_column("x", (1.0, 2.0)), ZERO_TOLERANCE)

    def test_beyond_tolerance(self):
        a = make_column("x", (1.0,))
        b = make_column("x", (1.001,))
        assert not column_equal(a, b, DEFAULT_TOLERANCE)
        assert column_equal(a, b, ToleranceSpec(0.01, 0))

    def test_spec_formula_is_sum_not_max(self):
        # |x-y| <= abs + rel*max(|x|,|y|): 1.9e-9 passes only because terms add
        a = make_column("x", (1.0,))
        b = make_column("x", (1.0 + 1.9e-9,))
        assert column_equal(a, b, ToleranceSpec(1e-9, 1e-9))

    def test_bool_never_equals_number(self):
        assert not column_equal(make_column("x", (True,)), make_column("x", (1,)), ZERO_TOLERANCE)


values_strategy = st.one_of(
    st.none(),
    st.integers(min_value=-100, max_value=100),
    st.floats(min_value=-100, max_value=100, allow_nan=False),
    st.text(alphabet="abcxyz", max_size=4),
    st.booleans(),
)


@st.composite
def columns(draw):
    kind = draw(st.sampled_from(["int", "float", "text", "bool", "mixed_num"]))
    size = draw(st.integers(min_value=0, max_value=6))
    gens = {
        "int": st.integers(min_value=-50, max_value=50),
        "float": st.floats(min_value=-50, max_value=50, allow_nan=False),
        "text": st.text(alphabet="abc xyz", max_size=5),
        "bool": st.booleans(),
        "mixed_num": st.one_of(st.integers(-5, 5), st.floats(-5, 5, allow_nan=False)),
    }
    cells = draw(st.lists(st.one_of(st.none(), gens[kind]), min_size=size, max_size=size))
    return make_column("c", tuple(cells))


class TestColumnEqualProperties:
    @given(columns())
    def test_reflexive(self, col):
        assert column_equal(col, col, DEFAULT_TOLERANCE)

    @given(columns(), columns())
    def test_symmetric(self, a, b):
        assert column_equal(a, b, DEFAULT_TOLERANCE) == column_equal(b, a, DEFAULT_TOLERANCE)


@st.composite
def tables(draw):
    n_rows = draw(st.integers(min_value=0, max_value=5))
    n_cols = draw(st.integers(min_value=1, max_value=4))
    cols = []
    for i in range(n_cols):
        kind = draw(st.sampled_from(["int", "float", "text", "bool"]))
        gen = {
            "int": st.integers(min_value=-1000, max_value=1000),
            "float": st.floats(allow_nan=False, allow_infinity=False, width=64),
            "text": st.text(alphabet="ab,\"c 'é\n", max_size=6),
            "bool": st.booleans(),
        }[kind]
        cells = draw(st.lists(st.one_of(st.none(), gen), min_size=n_rows, max_size=n_rows))
        # empty text cells cannot be distinguished from missing in delimited form
        cells = [None if c == "" else c for c in cells]
        cols.append(make_column(f"col{i}", tuple(cells)))
    return DataTable(tuple(cols))


class TestRoundTrip:
    @given(tables())
    @settings(max_examples=60)
    def test_write_then_load_is_exact(self, table):
        back = load_table(write_table(table))
        assert back.column_names == table.column_names
        for name in table.column_names:
            assert column_equal(back.column(name), table.column(name), ZERO_TOLERANCE)

    def test_float_rendering_shortest_roundtrip(self):
        table = DataTable((make_column("x", (0.1, 1 / 3, 2.0**-40)),))
        back = load_table(write_table(table))
        assert back.column("x").values == table.column("x").values


class TestFingerprint:
    def test_equal_columns_equal_digests(self):
        a = make_column("x", (1.0, 2.0, None))
        b = make_column("y", (1.0, 2.0, None))
        assert fingerprint(a) == fingerprint(b)

    def test_name_not_part_of_digest(self):
        assert fingerprint(make_column("x", ("p", "q"))) == fingerprint(make_column("z", ("p", "q")))

    def test_hex_rendering(self):
        digest = fingerprint(make_column("x", (1,)))
        assert len(digest) == 64
        assert digest == digest.lower()
        int(digest, 16)

    def test_tolerance_equal_columns_share_digest(self):
        # raw float difference 1e-12, equal under the default tolerance;
        # oracle: recompute the quantized sequences directly and compare
        a = make_column("x", (0.125, 7.25, -3.5))
        b = make_column("x", (0.125 + 1e-12, 7.25 - 1e-12, -3.5 + 1e-12))
        assert column_equal(a, b, DEFAULT_TOLERANCE)
        assert quantized_cells(a, DEFAULT_TOLERANCE) == quantized_cells(b, DEFAULT_TOLERANCE)
        assert fingerprint(a) == fingerprint(b)

    def test_perturbation_beyond_tolerance_changes_digest(self):
        import random

        rng = random.Random(13)
        collisions = 0
        for _ in range(10_000):
            base = [rng.uniform(-10, 10) for _ in range(4)]
            col_a = make_column("x", tuple(base))
            idx = rng.randrange(4)
            bumped = list(base)
            bumped[idx] += rng.uniform(0.01, 1.0) * rng.choice([-1, 1])
            col_b = make_column("x", tuple(bumped))
            if fingerprint(col_a) == fingerprint(col_b):
                collisions += 1
        assert collisions == 0

    @given(
        st.lists(st.integers(min_value=-10_000, max_value=10_000), min_size=1, max_size=5),
        st.integers(min_value=0, max_value=4),
    )
    @settings(max_examples=200)
    def test_no_false_negatives_on_grid_safe_values(self, raw, which):
        # values on a 1e-3 grid sit far from quantization boundaries, so a
        # sub-tolerance nudge never splits a bucket
        base = [v / 1000 for v in raw]
        nudged = list(base)
        nudged[which % len(base)] += 4e-13
        a, b = make_column("x", tuple(base)), make_column("x", tuple(nudged))
        assert column_equal(a, b, DEFAULT_TOLERANCE)
        assert fingerprint(a) == fingerprint(b)

    def test_missing_distinct_from_zero(self):
        assert fingerprint(make_column("x", (None,))) != fingerprint(make_column("x", (0.0,)))


class TestDataTable:
    def test_unique_names_enforced(self):
        col = make_column("x", (1,))
        with pytest.raises(SchemaError):
            DataTable((col, col))

    def test_equal_lengths_enforced(self):
        with pytest.raises(SchemaError):
            DataTable((make_column("x", (1,)), make_column("y", (1, 2))))

    def test_nfc_normalization(self):
        composed = "café"
        decomposed = "café"
        a = make_column("x", (composed,))
        b = make_column("x", (decomposed,))
        assert a.values == b.values
        assert column_equal(a, b, ZERO_TOLERANCE)

    def test_nan_normalized_in_construction(self):
        col = Column("x", (float("nan"), 1.0), "number")
        assert col.values == (None, 1.0)
        assert not any(isinstance(v, float) and math.isnan(v) for v in col.values)
