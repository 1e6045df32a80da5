"""CSV reading/writing and deterministic table generation.

The CSV dialect is RFC-4180: fields separated by a single-byte delimiter,
quoted fields may contain delimiters, quotes (doubled), and newlines;
records end with LF or CRLF. One deliberate extension: a bare empty field
(or the configured null_token) is a null, while a quoted empty string ""
is an empty string. The writer therefore quotes every text field, which
also keeps type inference idempotent for files this module wrote, since a
string that happens to look numeric comes back quoted.

The stdlib csv module cannot report whether a field was quoted, so parsing
is a small regex scanner instead.

Type inference, per column over the first infer_rows data rows, nulls
skipped: Int64 if every field is an optionally signed decimal integer,
else Float64 if every field parses as decimal/scientific (inf/nan
included), else Bool if every field is true/false case-insensitive, else
Utf8. A column whose sampled fields include a quoted one is Utf8 outright.
A column with no non-null sample is Utf8; that boundary (and integers
wider than 64 bits falling through to Float64/Utf8) is inherent to
sampling-based inference.
"""

from __future__ import annotations

import concurrent.futures
import io
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .table import Column, DType, Field, Schema, Table

__all__ = [
    "CsvError",
    "CsvReadOptions",
    "read_csv",
    "read_csv_many",
    "write_csv",
    "generate_table",
    "generate_table_slice",
    "default_generated_schema",
]


class CsvError(ValueError):
    """Malformed CSV, ragged rows, or values rejected by an explicit schema."""


@dataclass
class CsvReadOptions:
    delimiter: str = ","
    has_header: bool = True
    use_threads: bool = True
    schema: Sequence[DType] | None = None
    infer_rows: int = 1000
    null_token: str = ""

    def __post_init__(self):
        if len(self.delimiter) != 1 or self.delimiter in '"\r\n':
            raise ValueError("delimiter must be one character, not quote/CR/LF")
        if self.infer_rows < 1:
            raise ValueError("infer_rows must be >= 1")


_QUOTED = re.compile(r'"((?:[^"]|"")*)"')


def _scan_records(text: str, delim: str):
    """Yield (starting_line_number, [(field_text, was_quoted), ...])."""
    bare = re.compile(rf"[^{re.escape(delim)}\r\n]*")
    pos, line_no, n = 0, 1, len(text)
    while pos < n:
        record: list[tuple[str, bool]] = []
        record_line = line_no
        while True:
            if pos < n and text[pos] == '"':
                m = _QUOTED.match(text, pos)
                if m is None:
                    raise CsvError(f"line {line_no}: unterminated quoted field")
                raw = m.group(1)
                line_no += raw.count("\n")
                record.append((raw.replace('""', '"'), True))
                pos = m.end()
            else:
                m = bare.match(text, pos)
                record.append((m.group(0), False))
                pos = m.end()
            if pos >= n:
                break
            ch = text[pos]
            if ch == delim:
                pos += 1
                continue
            if ch == "\n":
                pos += 1
                line_no += 1
                break
            if ch == "\r":
                pos += 1
                if pos < n and text[pos] == "\n":
                    pos += 1
                line_no += 1
                break
            raise CsvError(
                f"line {line_no}: unexpected {ch!r} after closing quote"
            )
        yield record_line, record


_INT_RE = re.compile(r"[+-]?[0-9]+\Z")
_FLOAT_RE = re.compile(
    r"[+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?\Z|[+-]?(?:inf|infinity|nan)\Z",
    re.IGNORECASE,
)


def _is_int64(text: str) -> bool:
    if not _INT_RE.match(text):
        return False
    return -(2**63) <= int(text) < 2**63


def _infer_dtype(samples: list[tuple[str, bool]]) -> DType:
    if not samples:
        return DType.Utf8
    if any(quoted for _, quoted in samples):
        return DType.Utf8
    if all(_is_int64(t) for t, _ in samples):
        return DType.Int64
    if all(_FLOAT_RE.match(t) for t, _ in samples):
        return DType.Float64
    if all(t.lower() in ("true", "false") for t, _ in samples):
        return DType.Bool
    return DType.Utf8


def _convert(text: str, dtype: DType, line: int, col: int):
    try:
        if dtype is DType.Int64:
            if not _is_int64(text):
                raise ValueError
            return int(text)
        if dtype is DType.Float64:
            if not _FLOAT_RE.match(text):
                raise ValueError
            return float(text)
        if dtype is DType.Bool:
            low = text.lower()
            if low == "true":
                return True
            if low == "false":
                return False
            raise ValueError
        return text
    except ValueError:
        raise CsvError(
            f"line {line}, column {col + 1}: {text!r} is not a valid {dtype.name}"
        ) from None


def read_csv(path: str, opts: CsvReadOptions | None = None) -> Table:
    """Parse one CSV file into a table; see the module docstring for dialect."""
    opts = opts or CsvReadOptions()
    with open(path, "r", encoding="utf-8", newline="") as f:
        text = f.read()

    records = _scan_records(text, opts.delimiter)
    names: list[str] | None = None
    if opts.has_header:
        try:
            _, header = next(records)
        except StopIteration:
            raise CsvError(f"{path}: empty file, expected a header row") from None
        names = [t for t, _ in header]

    data_rows: list[tuple[int, list[tuple[str, bool]]]] = list(records)

    if names is not None:
        ncols = len(names)
    elif opts.schema is not None:
        ncols = len(opts.schema)
    elif data_rows:
        ncols = len(data_rows[0][1])
    else:
        raise CsvError(f"{path}: empty file and no schema to shape an empty table")
    if names is None:
        names = [f"c{i}" for i in range(ncols)]
    if opts.schema is not None and len(opts.schema) != ncols:
        raise CsvError(
            f"{path}: schema has {len(opts.schema)} types for {ncols} columns"
        )

    for line, rec in data_rows:
        if len(rec) != ncols:
            raise CsvError(
                f"{path}: line {line}: ragged row with {len(rec)} fields, expected {ncols}"
            )

    def is_null(text: str, quoted: bool) -> bool:
        return not quoted and text == opts.null_token

    if opts.schema is not None:
        dtypes = list(opts.schema)
    else:
        limit = min(opts.infer_rows, len(data_rows))
        dtypes = []
        for c in range(ncols):
            samples = [
                data_rows[r][1][c]
                for r in range(limit)
                if not is_null(*data_rows[r][1][c])
            ]
            dtypes.append(_infer_dtype(samples))

    columns = []
    for c in range(ncols):
        cells = []
        for line, rec in data_rows:
            text_c, quoted = rec[c]
            if is_null(text_c, quoted):
                cells.append(None)
            else:
                cells.append(_convert(text_c, dtypes[c], line, c))
        columns.append(Column.from_sequence(dtypes[c], cells))
    schema = Schema([Field(names[c], dtypes[c]) for c in range(ncols)])
    return Table(schema, columns)


def read_csv_many(paths: Sequence[str], opts: CsvReadOptions | None = None) -> list[Table]:
    """One table per path, order preserved; parses concurrently by default."""
    opts = opts or CsvReadOptions()
    paths = list(paths)
    if not opts.use_threads or len(paths) <= 1:
        return [read_csv(p, opts) for p in paths]
    with concurrent.futures.ThreadPoolExecutor(
        max_workers=min(len(paths), 8)
    ) as pool:
        futures = [pool.submit(read_csv, p, opts) for p in paths]
        results: list[Table | None] = [None] * len(paths)
        first_error: Exception | None = None
        for i, fut in enumerate(futures):
            try:
                results[i] = fut.result()
            except Exception as e:
                if first_error is None:
                    first_error = e
        if first_error is not None:
            raise first_error
        return [r for r in results if r is not None]


def _format_float(v: float) -> str:
    return repr(float(v))


def _quote(text: str) -> str:
    return '"' + text.replace('"', '""') + '"'


def _maybe_quote(text: str, delim: str) -> str:
    if text == "" or '"' in text or delim in text or "\n" in text or "\r" in text:
        return _quote(text)
    return text


def write_csv(table: Table, path: str, delimiter: str = ",", write_header: bool = True) -> None:
    """Write LF-terminated CSV; floats as shortest round-trip decimals,
    booleans as true/false, nulls as empty fields, all text quoted."""
    if len(delimiter) != 1 or delimiter in '"\r\n':
        raise ValueError("delimiter must be one character, not quote/CR/LF")
    buf = io.StringIO()
    if write_header:
        buf.write(delimiter.join(_maybe_quote(f.name, delimiter) for f in table.schema))
        buf.write("\n")
    cols = table.columns
    for i in range(table.num_rows):
        parts = []
        for col in cols:
            v = col.value(i)
            if v is None:
                parts.append("")
            elif col.dtype is DType.Int64:
                parts.append(str(v))
            elif col.dtype is DType.Float64:
                parts.append(_format_float(v))
            elif col.dtype is DType.Bool:
                parts.append("true" if v else "false")
            else:
                parts.append(_quote(v))
        buf.write(delimiter.join(parts))
        buf.write("\n")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(buf.getvalue())


# ---------------------------------------------------------------------------
# Deterministic generation (splitmix64)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def _stream(seed: int, column: int, lo: int, hi: int) -> np.ndarray:
    """Draws lo..hi-1 of the uniform u64 stream for one (seed, column)."""
    mask = (1 << 64) - 1
    start = (seed + 0x9E3779B97F4A7C15 * (column + 1)) & mask
    base = _splitmix64(np.array([start], dtype=np.uint64))[0]
    counters = base + _GOLDEN * np.arange(lo, hi, dtype=np.uint64)
    return _splitmix64(counters)


def default_generated_schema() -> Schema:
    """The benchmark shape: one Int64 key plus three Float64 columns."""
    return Schema(
        [
            Field("key", DType.Int64),
            Field("d0", DType.Float64),
            Field("d1", DType.Float64),
            Field("d2", DType.Float64),
        ]
    )


def generate_table(
    num_rows: int,
    seed: int,
    schema: Schema | None = None,
    key_cardinality: int | None = None,
) -> Table:
    """Deterministic pseudo-random table; same arguments, same bytes.

    Int64 columns draw uniformly from [0, key_cardinality) (default:
    num_rows, which yields join duplicates at realistic rates), Float64
    from uniform [0, 1), Bool from a fair coin, Utf8 as short synthetic
    tokens. No nulls are generated.
    """
    return generate_table_slice(num_rows, seed, 0, num_rows, schema, key_cardinality)


def generate_table_slice(
    num_rows: int,
    seed: int,
    lo: int,
    hi: int,
    schema: Schema | None = None,
    key_cardinality: int | None = None,
) -> Table:
    """Rows [lo, hi) of generate_table(num_rows, seed, ...), without
    materializing the rest. Lets a worker build exactly its block of a
    logical table that is identical across world sizes."""
    if num_rows < 0:
        raise ValueError("num_rows must be >= 0")
    if not 0 <= lo <= hi <= num_rows:
        raise ValueError(f"slice [{lo}, {hi}) outside [0, {num_rows}]")
    schema = schema or default_generated_schema()
    if len(schema) == 0:
        raise ValueError("schema must have at least one column")
    card = key_cardinality if key_cardinality is not None else max(num_rows, 1)
    if card < 1:
        raise ValueError("key_cardinality must be >= 1")

    n = hi - lo
    validity = np.ones(n, dtype=np.bool_)
    columns = []
    for c, f in enumerate(schema):
        u = _stream(seed, c, lo, hi)
        if f.dtype is DType.Int64:
            vals = (u % np.uint64(card)).astype(np.int64)
            columns.append(Column(DType.Int64, validity, values=vals))
        elif f.dtype is DType.Float64:
            vals = (u >> np.uint64(11)).astype(np.float64) * (2.0**-53)
            columns.append(Column(DType.Float64, validity, values=vals))
        elif f.dtype is DType.Bool:
            columns.append(Column(DType.Bool, validity, values=(u & np.uint64(1)).astype(np.bool_)))
        else:
            toks = [f"t{int(v) % 100000}" for v in u]
            columns.append(Column.from_sequence(DType.Utf8, toks))
    return Table(schema, columns)
