"""CSV reading/writing, type inference, and the seeded data generator."""

import math

import numpy as np
import pytest

from shardtable import (
    CsvError,
    CsvReadOptions,
    DType,
    Field,
    Schema,
    Table,
    generate_table,
    generate_table_slice,
    read_csv,
    read_csv_many,
    write_csv,
)
from shardtable.oracle import table_atoms

from conftest import rand_table


def write_text(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def roundtrip(tmp_path, t: Table) -> Table:
    path = str(tmp_path / "t.csv")
    write_csv(t, path)
    schema = [f.dtype for f in t.schema]
    return read_csv(path, CsvReadOptions(schema=schema))


def test_roundtrip_explicit_schema(tmp_path, rng):
    for i in range(60):
        t = rand_table(rng, max_rows=25)
        back = roundtrip(tmp_path, t)
        assert table_atoms(back) == table_atoms(t), f"trial {i}"
        assert [f.name for f in back.schema] == [f.name for f in t.schema]


def test_float_shortest_roundtrip(tmp_path):
    vals = [0.1, 1 / 3, 1e-300, 3.5e300, 6.02e23, -2.5, float("inf"), -float("inf"), float("nan")]
    t = Table.from_rows(Schema([Field("x", DType.Float64)]), [(v,) for v in vals])
    back = roundtrip(tmp_path, t)
    for i, v in enumerate(vals):
        got = back.columns[0].value(i)
        assert got == v or (math.isnan(v) and math.isnan(got))


def test_quoting_dialect(tmp_path):
    t = Table.from_rows(
        Schema([Field("s", DType.Utf8)]),
        [("plain",), ("with,comma",), ('say ""hi""'.replace('""', '"'),), ("two\nlines",), ("",), (None,)],
    )
    path = str(tmp_path / "q.csv")
    write_csv(t, path)
    back = read_csv(path, CsvReadOptions(schema=[DType.Utf8]))
    assert table_atoms(back) == table_atoms(t)
    text = open(path, encoding="utf-8").read()
    # an empty string must be written quoted so it stays distinct from null
    assert '""' in text


def test_null_vs_empty_string(tmp_path):
    path = write_text(tmp_path, "n.csv", 's\n""\n\n')
    t = read_csv(path, CsvReadOptions(schema=[DType.Utf8]))
    assert t.columns[0].value(0) == ""
    assert t.columns[0].value(1) is None


def test_custom_null_token(tmp_path):
    path = write_text(tmp_path, "nt.csv", 'a,b\nNA,1\n2,NA\n')
    t = read_csv(path, CsvReadOptions(schema=[DType.Int64, DType.Int64], null_token="NA"))
    assert t.to_rows() == [(None, 1), (2, None)]
    # quoting shields a field from null-token interpretation
    path2 = write_text(tmp_path, "nt2.csv", 's\n"NA"\nNA\n')
    t2 = read_csv(path2, CsvReadOptions(schema=[DType.Utf8], null_token="NA"))
    assert t2.to_rows() == [("NA",), (None,)]


def test_crlf_and_final_newline(tmp_path):
    path = write_text(tmp_path, "crlf.csv", "a,b\r\n1,2\r\n3,4")
    t = read_csv(path, CsvReadOptions(schema=[DType.Int64, DType.Int64]))
    assert t.to_rows() == [(1, 2), (3, 4)]


def test_quoted_newline_inside_field(tmp_path):
    path = write_text(tmp_path, "nl.csv", 's,i\n"a\nb",1\n')
    t = read_csv(path, CsvReadOptions(schema=[DType.Utf8, DType.Int64]))
    assert t.to_rows() == [("a\nb", 1)]


def test_header_handling(tmp_path):
    path = write_text(tmp_path, "h.csv", "x,y\n1,2\n")
    with_header = read_csv(path)
    assert [f.name for f in with_header.schema] == ["x", "y"]
    headerless = read_csv(path, CsvReadOptions(has_header=False, schema=[DType.Utf8, DType.Utf8]))
    assert headerless.num_rows == 2
    assert [f.name for f in headerless.schema] == ["c0", "c1"]


def test_custom_delimiter(tmp_path):
    path = write_text(tmp_path, "d.csv", "a;b\n1;x\n")
    t = read_csv(path, CsvReadOptions(delimiter=";", schema=[DType.Int64, DType.Utf8]))
    assert t.to_rows() == [(1, "x")]
    out = str(tmp_path / "d2.csv")
    write_csv(t, out, delimiter=";")
    t2 = read_csv(out, CsvReadOptions(delimiter=";", schema=[DType.Int64, DType.Utf8]))
    assert t2.to_rows() == t.to_rows()


def test_inference_ladder(tmp_path):
    path = write_text(
        tmp_path,
        "inf.csv",
        "i,f,b,s,pronum\n1,1.5,true,apple,1\n-2,2,false,2,2.5\n,,,,x\n",
    )
    t = read_csv(path)
    dtypes = [f.dtype for f in t.schema]
    assert dtypes == [DType.Int64, DType.Float64, DType.Bool, DType.Utf8, DType.Utf8]
    assert t.to_rows()[2] == (None, None, None, None, "x")


def test_inference_quoted_numbers_stay_text(tmp_path):
    path = write_text(tmp_path, "qn.csv", 's\n"1"\n"2"\n')
    t = read_csv(path)
    assert t.schema[0].dtype == DType.Utf8
    assert t.to_rows() == [("1",), ("2",)]


def test_inference_idempotent_on_own_output(tmp_path, rng):
    """write_csv then infer must reproduce dtypes (all-null columns aside)."""
    for _ in range(25):
        t = rand_table(rng, max_rows=20, null_rate=0.1)
        if any(
            all(c.value(i) is None for i in range(t.num_rows)) or t.num_rows == 0
            for c in t.columns
        ):
            continue
        path = str(tmp_path / "i.csv")
        write_csv(t, path)
        back = read_csv(path)
        assert [f.dtype for f in back.schema] == [f.dtype for f in t.schema]
        assert table_atoms(back) == table_atoms(t)


def test_explicit_schema_errors_carry_position(tmp_path):
    path = write_text(tmp_path, "bad.csv", "a,b\n1,2\nx,3\n")
    with pytest.raises(CsvError) as e:
        read_csv(path, CsvReadOptions(schema=[DType.Int64, DType.Int64]))
    assert "line 3" in str(e.value)
    assert "column 1" in str(e.value)


def test_ragged_row_rejected(tmp_path):
    path = write_text(tmp_path, "rag.csv", "a,b\n1,2,3\n")
    with pytest.raises(CsvError) as e:
        read_csv(path)
    assert "line 2" in str(e.value)


def test_unterminated_quote_rejected(tmp_path):
    path = write_text(tmp_path, "uq.csv", 's\n"oops\n')
    with pytest.raises(CsvError):
        read_csv(path)


def test_schema_width_mismatch_rejected(tmp_path):
    path = write_text(tmp_path, "w.csv", "a,b\n1,2\n")
    with pytest.raises(CsvError):
        read_csv(path, CsvReadOptions(schema=[DType.Int64]))


def test_read_csv_many_equals_sequential(tmp_path, rng):
    paths = []
    tables = []
    for i in range(6):
        t = rand_table(rng, max_rows=15)
        p = str(tmp_path / f"m{i}.csv")
        write_csv(t, p)
        paths.append(p)
        tables.append(t)
    opts = CsvReadOptions()
    seq = [read_csv(p, opts) for p in paths]
    par = read_csv_many(paths, opts)
    nothreads = read_csv_many(paths, CsvReadOptions(use_threads=False))
    for a, b, c in zip(seq, par, nothreads):
        assert table_atoms(a) == table_atoms(b) == table_atoms(c)


def test_read_csv_many_reports_first_failure(tmp_path):
    good = write_text(tmp_path, "g.csv", "a\n1\n")
    bad = write_text(tmp_path, "b.csv", "a\n1,2\n")
    with pytest.raises(CsvError):
        read_csv_many([good, bad, good])


# ----------------------------------------------------------------------------
# seeded generator


def test_generator_deterministic():
    a = generate_table(500, seed=42, key_cardinality=32)
    b = generate_table(500, seed=42, key_cardinality=32)
    assert table_atoms(a) == table_atoms(b)
    c = generate_table(500, seed=43, key_cardinality=32)
    assert table_atoms(a) != table_atoms(c)


def test_generator_default_schema():
    t = generate_table(10, seed=1)
    assert [f.dtype for f in t.schema] == [DType.Int64, DType.Float64, DType.Float64, DType.Float64]
    assert t.num_rows == 10


def test_generator_slices_tile_the_table():
    whole = generate_table(1000, seed=9, key_cardinality=50)
    cuts = [0, 130, 131, 500, 999, 1000]
    parts = [
        generate_table_slice(1000, 9, lo, hi, key_cardinality=50)
        for lo, hi in zip(cuts[:-1], cuts[1:])
    ]
    stitched = sum((table_atoms(p) for p in parts), [])
    assert stitched == table_atoms(whole)


def test_generator_key_range_and_float_bounds():
    t = generate_table(4000, seed=7, key_cardinality=13)
    keys = t.columns[0].values
    assert keys.min() >= 0 and keys.max() < 13
    for c in (1, 2, 3):
        x = t.columns[c].values
        assert x.min() >= 0.0 and x.max() < 1.0


def test_generator_keys_roughly_uniform():
    card = 16
    n = 16000
    t = generate_table(n, seed=123, key_cardinality=card)
    counts = np.bincount(t.columns[0].values, minlength=card)
    expected = n / card
    sigma = math.sqrt(n * (1 / card) * (1 - 1 / card))
    assert abs(counts - expected).max() < 5 * sigma


def test_generator_custom_schema_with_strings():
    s = Schema([Field("k", DType.Int64), Field("s", DType.Utf8), Field("b", DType.Bool)])
    t = generate_table(200, seed=4, schema=s, key_cardinality=6)
    assert t.num_rows == 200
    assert all(isinstance(t.columns[1].value(i), str) for i in range(200))
    vals = {t.columns[2].value(i) for i in range(200)}
    assert vals <= {True, False} and len(vals) == 2


def test_generator_empty():
    t = generate_table(0, seed=1)
    assert t.num_rows == 0
