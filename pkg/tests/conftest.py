"""Shared corpus builders for the test suite.

Random tables here are deliberately messy: nulls in every dtype, duplicate
keys, NaN / -0.0 / +-inf floats, empty strings next to nulls, and the empty
table itself. Operators that survive this corpus survive the clean cases for
free.
"""

import math
import random

import pytest

from shardtable import Column, DType, Field, Schema, Table

SPECIAL_FLOATS = [0.0, -0.0, 1.5, -2.25, math.inf, -math.inf, math.nan, 1e-300, 3.5e300]
SPECIAL_STRINGS = ["", "a", "aa", "grape", "naïve", "line\nbreak", '"quoted"', "comma,inside"]


def rand_value(rng: random.Random, dtype: DType, null_rate: float = 0.15):
    if rng.random() < null_rate:
        return None
    if dtype == DType.Int64:
        return rng.randint(-5, 5) if rng.random() < 0.7 else rng.randint(-(2**62), 2**62)
    if dtype == DType.Float64:
        if rng.random() < 0.4:
            return rng.choice(SPECIAL_FLOATS)
        return rng.uniform(-10, 10)
    if dtype == DType.Bool:
        return rng.random() < 0.5
    if rng.random() < 0.5:
        return rng.choice(SPECIAL_STRINGS)
    return "".join(rng.choice("abcxyz,\"'\n ") for _ in range(rng.randint(0, 12)))


def rand_schema(rng: random.Random, max_cols: int = 4) -> Schema:
    n = rng.randint(1, max_cols)
    dtypes = [rng.choice(list(DType)) for _ in range(n)]
    return Schema([Field(f"c{i}", d) for i, d in enumerate(dtypes)])


def rand_table(rng: random.Random, schema: Schema | None = None,
               max_rows: int = 40, null_rate: float = 0.15) -> Table:
    if schema is None:
        schema = rand_schema(rng)
    n = rng.randint(0, max_rows)
    rows = [
        tuple(rand_value(rng, f.dtype, null_rate) for f in schema)
        for _ in range(n)
    ]
    return Table.from_rows(schema, rows)


def keyed_pair(rng: random.Random, max_rows: int = 200, key_card: int = 16):
    """A (left, right, left_keys, right_keys) join fixture.

    Key columns draw from a tiny domain so duplicates and cross products are
    the common case, not the corner case. Keys may be multi-column and of
    mixed dtype; a slice of key values is nulled.
    """
    nkeys = rng.randint(1, 2)
    key_dtypes = [rng.choice([DType.Int64, DType.Utf8, DType.Float64]) for _ in range(nkeys)]

    def key_value(dtype):
        if rng.random() < 0.1:
            return None
        k = rng.randrange(key_card)
        if dtype == DType.Int64:
            return k
        if dtype == DType.Utf8:
            return f"k{k}"
        return float(k) / 4 if k else rng.choice([0.0, -0.0])

    def side(payload_dtype, payload_name):
        fields = [Field(f"k{i}", d) for i, d in enumerate(key_dtypes)]
        fields.append(Field(payload_name, payload_dtype))
        schema = Schema(fields)
        n = rng.randint(0, max_rows)
        rows = [
            tuple(key_value(d) for d in key_dtypes) + (rand_value(rng, payload_dtype),)
            for _ in range(n)
        ]
        return Table.from_rows(schema, rows)

    left = side(rng.choice(list(DType)), "lv")
    right = side(rng.choice(list(DType)), "rv")
    keys = list(range(nkeys))
    return left, right, keys, keys


def same_schema_pair(rng: random.Random, max_rows: int = 60):
    """Two tables over one schema with forced row overlap, for set operators."""
    schema = rand_schema(rng)
    a = rand_table(rng, schema, max_rows)
    b = rand_table(rng, schema, max_rows)
    if a.num_rows and rng.random() < 0.8:
        # splice some of a's rows into b so intersections are non-trivial
        shared = [a.row(rng.randrange(a.num_rows)) for _ in range(rng.randint(1, 8))]
        b = Table.from_rows(schema, b.to_rows() + shared)
    return a, b


def assert_tables_equal(actual: Table, expected: Table):
    assert actual.schema.same_types(expected.schema)
    assert actual.num_rows == expected.num_rows
    for c, (ca, ce) in enumerate(zip(actual.columns, expected.columns)):
        for i in range(actual.num_rows):
            va, ve = ca.value(i), ce.value(i)
            if isinstance(ve, float):
                assert (
                    va == ve or (math.isnan(va) and math.isnan(ve))
                ), f"col {c} row {i}: {va!r} != {ve!r}"
            else:
                assert va == ve, f"col {c} row {i}: {va!r} != {ve!r}"


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
