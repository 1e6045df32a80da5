"""Immutable columnar tables and the canonical row encoding.

A Table is a schema plus equal-length typed columns. Each column stores its
values in one contiguous numpy buffer alongside a validity mask (False marks a
null). Tables are frozen at construction, so they can be shared between worker
threads and shipped between processes without copying or locking.

Row equality across the whole engine is defined here, once: two rows are equal
on a column subset iff `encode_row` yields byte-identical encodings. The
encoding gives every value a presence tag and a type tag, length-prefixes
strings, and normalizes floats (-0.0 collapses to +0.0, every NaN to the
single quiet-NaN pattern), so byte equality is exactly the engine's
null==null / NaN==NaN equality. `hash_row` is 64-bit FNV-1a over those bytes;
`hash_rows` is the vectorized equivalent used by the partitioner and joins.

Construction canonicalizes buffers (null slots zeroed, floats normalized), so
value-equal tables are also buffer-identical, which keeps serialization
deterministic.
"""

from __future__ import annotations

import enum
import struct
import sys
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DType",
    "Schema",
    "Column",
    "Table",
    "SchemaMismatchError",
    "encode_row",
    "encode_rows",
    "hash_row",
    "hash_rows",
    "concat",
    "take_rows",
]

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

_U64_FNV_OFFSET = np.uint64(FNV_OFFSET_BASIS)
_U64_FNV_PRIME = np.uint64(FNV_PRIME)

# Single canonical quiet-NaN bit pattern all NaNs are normalized to.
CANONICAL_NAN_BITS = 0x7FF8000000000000
_CANONICAL_NAN = struct.unpack("<d", struct.pack("<Q", CANONICAL_NAN_BITS))[0]


class SchemaMismatchError(ValueError):
    """Raised when an operation requires matching schemas and they differ."""


class DType(enum.Enum):
    """Closed set of column types. The enum value doubles as the wire tag."""

    Int64 = 0
    Float64 = 1
    Utf8 = 2
    Bool = 3

    @property
    def tag(self) -> int:
        return self.value

    @property
    def numpy_dtype(self):
        return _NUMPY_DTYPES[self]

    @property
    def is_fixed_width(self) -> bool:
        return self is not DType.Utf8

    @property
    def byte_width(self) -> int:
        return 1 if self is DType.Bool else 8


_NUMPY_DTYPES = {
    DType.Int64: np.dtype(np.int64),
    DType.Float64: np.dtype(np.float64),
    DType.Bool: np.dtype(np.bool_),
    DType.Utf8: None,
}

_DTYPE_BY_TAG = {d.tag: d for d in DType}


def dtype_from_tag(tag: int) -> DType:
    try:
        return _DTYPE_BY_TAG[tag]
    except KeyError:
        raise ValueError(f"unknown dtype tag {tag}") from None


@dataclass(frozen=True)
class Field:
    name: str
    dtype: DType


class Schema:
    """Ordered list of (name, dtype). Position is identity; names may repeat."""

    __slots__ = ("fields",)

    def __init__(self, fields: Iterable[tuple[str, DType] | Field]):
        fs = []
        for f in fields:
            if isinstance(f, Field):
                fs.append(f)
            else:
                name, dtype = f
                fs.append(Field(str(name), dtype))
        if not fs:
            raise ValueError("a schema needs at least one field")
        object.__setattr__(self, "fields", tuple(fs))

    def __setattr__(self, name, value):
        raise AttributeError("Schema is immutable")

    def __len__(self) -> int:
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)

    def __getitem__(self, i: int) -> Field:
        return self.fields[i]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    @property
    def dtypes(self) -> tuple[DType, ...]:
        return tuple(f.dtype for f in self.fields)

    def same_types(self, other: "Schema") -> bool:
        return self.dtypes == other.dtypes

    def __eq__(self, other):
        return isinstance(other, Schema) and self.fields == other.fields

    def __hash__(self):
        return hash(self.fields)

    def __repr__(self):
        inner = ", ".join(f"{f.name}: {f.dtype.name}" for f in self.fields)
        return f"Schema({inner})"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def _normalize_float64(values: np.ndarray) -> np.ndarray:
    out = values.astype(np.float64, copy=True)
    out[out == 0.0] = 0.0  # collapses -0.0 into +0.0
    out[np.isnan(out)] = _CANONICAL_NAN
    return out


class Column:
    """One typed column: contiguous values plus a validity mask.

    Fixed-width columns hold a numpy buffer (`int64`, `float64`, or `bool_`).
    Utf8 columns hold UTF-8 bytes in `data` addressed by `offsets`
    (len == length + 1, monotone, offsets[0] == 0, offsets[-1] == len(data)).
    Buffers are canonical: null slots are zeroed (empty span for strings) and
    floats are normalized, so equal columns have equal buffers.
    """

    __slots__ = ("dtype", "length", "validity", "values", "offsets", "data")

    def __init__(
        self,
        dtype: DType,
        validity: np.ndarray,
        values: np.ndarray | None = None,
        offsets: np.ndarray | None = None,
        data: bytes | None = None,
    ):
        # Buffers are copied: a frozen column must never alias caller arrays.
        validity = np.array(validity, dtype=np.bool_, copy=True)
        if validity.ndim != 1:
            raise ValueError("validity must be one-dimensional")
        length = len(validity)

        if dtype.is_fixed_width:
            if values is None:
                raise ValueError(f"{dtype.name} column needs a values buffer")
            if dtype is DType.Float64:
                values = _normalize_float64(np.asarray(values))
            else:
                values = np.array(values, dtype=dtype.numpy_dtype, copy=True)
            if values.shape != (length,):
                raise ValueError(
                    f"values length {values.shape[0] if values.ndim == 1 else values.shape}"
                    f" does not match validity length {length}"
                )
            if not validity.all():
                values[~validity] = False if dtype is DType.Bool else 0
            values = _freeze(values)
            offsets = None
            data = None
        else:
            if offsets is None or data is None:
                raise ValueError("Utf8 column needs offsets and data")
            offsets = np.array(offsets, dtype=np.int64, copy=True)
            if offsets.shape != (length + 1,):
                raise ValueError("offsets must have length rows + 1")
            if offsets[0] != 0:
                raise ValueError("offsets[0] must be 0")
            if np.any(np.diff(offsets) < 0):
                raise ValueError("offsets must be monotone non-decreasing")
            data = bytes(data)
            if int(offsets[-1]) != len(data):
                raise ValueError("offsets[-1] must equal the data buffer size")
            if not validity.all():
                spans = np.diff(offsets)
                if np.any(spans[~validity] != 0):
                    offsets, data = _rebuild_utf8(offsets, data, validity)
            offsets = _freeze(offsets)
            values = None

        self.dtype = dtype
        self.length = length
        self.validity = _freeze(validity)
        self.values = values
        self.offsets = offsets
        self.data = data

    @classmethod
    def from_sequence(cls, dtype: DType, seq: Sequence) -> "Column":
        """Build a column from python values; None marks a null."""
        validity = np.array([v is not None for v in seq], dtype=np.bool_)
        if dtype.is_fixed_width:
            np_dtype = dtype.numpy_dtype
            fill: object = False if dtype is DType.Bool else 0
            values = np.array([fill if v is None else v for v in seq], dtype=np_dtype)
            return cls(dtype, validity, values=values)
        chunks = []
        offsets = np.zeros(len(seq) + 1, dtype=np.int64)
        total = 0
        for i, v in enumerate(seq):
            if v is not None:
                b = v.encode("utf-8") if isinstance(v, str) else bytes(v)
                chunks.append(b)
                total += len(b)
            offsets[i + 1] = total
        return cls(dtype, validity, offsets=offsets, data=b"".join(chunks))

    def value(self, i: int):
        """Python value at row i, None if null."""
        if not 0 <= i < self.length:
            raise IndexError(f"row index {i} out of range [0, {self.length})")
        if not self.validity[i]:
            return None
        if self.dtype is DType.Utf8:
            lo, hi = int(self.offsets[i]), int(self.offsets[i + 1])
            return self.data[lo:hi].decode("utf-8")
        v = self.values[i]
        if self.dtype is DType.Int64:
            return int(v)
        if self.dtype is DType.Float64:
            return float(v)
        return bool(v)

    def utf8_bytes(self, i: int) -> bytes:
        lo, hi = int(self.offsets[i]), int(self.offsets[i + 1])
        return self.data[lo:hi]

    def __len__(self) -> int:
        return self.length

    def __repr__(self):
        return f"Column({self.dtype.name}, length={self.length})"


def _rebuild_utf8(offsets, data, validity):
    """Force empty spans on null rows; keeps buffers canonical."""
    spans = np.diff(offsets)
    spans = np.where(validity, spans, 0)
    new_offsets = np.zeros(len(offsets), dtype=np.int64)
    np.cumsum(spans, out=new_offsets[1:])
    chunks = []
    for i in np.nonzero(validity & (spans > 0))[0]:
        lo = int(offsets[i])
        chunks.append(data[lo : lo + int(spans[i])])
    return new_offsets, b"".join(chunks)


class Table:
    """Immutable table: a schema and one equal-length column per field."""

    __slots__ = ("schema", "columns", "num_rows")

    def __init__(self, schema: Schema, columns: Sequence[Column]):
        columns = tuple(columns)
        if len(columns) != len(schema):
            raise ValueError(
                f"schema has {len(schema)} fields but {len(columns)} columns given"
            )
        lengths = {c.length for c in columns}
        if len(lengths) > 1:
            raise ValueError(f"column lengths differ: {sorted(lengths)}")
        for field, col in zip(schema, columns):
            if field.dtype is not col.dtype:
                raise ValueError(
                    f"column '{field.name}' declared {field.dtype.name} "
                    f"but holds {col.dtype.name}"
                )
        self.schema = schema
        self.columns = columns
        self.num_rows = columns[0].length if columns else 0

    @classmethod
    def from_rows(cls, schema: Schema, rows: Iterable[Sequence]) -> "Table":
        """Build a table from row tuples; None marks a null."""
        rows = list(rows)
        cols = []
        for i, field in enumerate(schema):
            cols.append(Column.from_sequence(field.dtype, [r[i] for r in rows]))
        return cls(schema, cols)

    @classmethod
    def from_arrays(
        cls, schema: Schema, arrays: Sequence, validity: Sequence | None = None
    ) -> "Table":
        """Build from one numpy array (or str list for Utf8) per column."""
        cols = []
        for i, field in enumerate(schema):
            mask = None if validity is None else validity[i]
            if field.dtype is DType.Utf8:
                seq = list(arrays[i])
                if mask is not None:
                    seq = [v if ok else None for v, ok in zip(seq, mask)]
                cols.append(Column.from_sequence(DType.Utf8, seq))
            else:
                arr = np.asarray(arrays[i], dtype=field.dtype.numpy_dtype)
                if mask is None:
                    mask = np.ones(len(arr), dtype=np.bool_)
                cols.append(Column(field.dtype, np.asarray(mask, np.bool_), values=arr))
        return cls(schema, cols)

    def row(self, i: int, column_subset: Sequence[int] | None = None) -> tuple:
        idxs = range(len(self.columns)) if column_subset is None else column_subset
        return tuple(self.columns[c].value(i) for c in idxs)

    def to_rows(self) -> list[tuple]:
        return [self.row(i) for i in range(self.num_rows)]

    def empty_like(self) -> "Table":
        return take_rows(self, np.empty(0, dtype=np.int64))

    def __repr__(self):
        return f"Table({self.schema!r}, num_rows={self.num_rows})"


# ---------------------------------------------------------------------------
# Canonical row encoding and hashing


def _check_subset(table: Table, column_subset: Sequence[int]) -> None:
    ncols = len(table.columns)
    for c in column_subset:
        if not 0 <= c < ncols:
            raise IndexError(f"column index {c} out of range [0, {ncols})")


def encode_row(table: Table, row_index: int, column_subset: Sequence[int]) -> bytes:
    """Canonical bytes of one row restricted to a column subset.

    Per column: a presence byte (0x00 null, 0x01 present), then for present
    values the dtype tag byte and the value: Int64/Float64 as 8 little-endian
    bytes (floats normalized), Bool as one byte, Utf8 as a 4-byte
    little-endian length followed by the UTF-8 bytes. Byte equality of the
    result is the engine's row-equality relation.
    """
    if not 0 <= row_index < table.num_rows:
        raise IndexError(f"row index {row_index} out of range [0, {table.num_rows})")
    _check_subset(table, column_subset)
    parts = []
    for c in column_subset:
        col = table.columns[c]
        if not col.validity[row_index]:
            parts.append(b"\x00")
            continue
        dtype = col.dtype
        head = bytes((1, dtype.tag))
        if dtype is DType.Int64:
            parts.append(head + struct.pack("<q", int(col.values[row_index])))
        elif dtype is DType.Float64:
            parts.append(head + struct.pack("<d", float(col.values[row_index])))
        elif dtype is DType.Bool:
            parts.append(head + (b"\x01" if col.values[row_index] else b"\x00"))
        else:
            raw = col.utf8_bytes(row_index)
            parts.append(head + struct.pack("<I", len(raw)) + raw)
    return b"".join(parts)


def encode_rows(table: Table, column_subset: Sequence[int] | None = None) -> list[bytes]:
    """encode_row for every row; full row when no subset is given."""
    if column_subset is None:
        column_subset = range(len(table.columns))
    return [encode_row(table, i, column_subset) for i in range(table.num_rows)]


def hash_row(key: bytes) -> int:
    """64-bit FNV-1a over canonical row bytes; identical on every platform."""
    h = FNV_OFFSET_BASIS
    for b in key:
        h = ((h ^ b) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def _value_byte_matrix(col: Column) -> np.ndarray:
    """Rows-by-width uint8 view of the canonical little-endian value bytes."""
    if col.dtype is DType.Bool:
        return col.values.view(np.uint8).reshape(col.length, 1)
    wire = "<i8" if col.dtype is DType.Int64 else "<f8"
    arr = col.values.astype(wire, copy=False)
    return arr.view(np.uint8).reshape(col.length, 8)


def _fnv_absorb(h: np.ndarray, byte_vals: np.ndarray) -> np.ndarray:
    return (h ^ byte_vals.astype(np.uint64)) * _U64_FNV_PRIME


def hash_rows(table: Table, column_subset: Sequence[int]) -> np.ndarray:
    """Vectorized FNV-1a row hashes, equal to hash_row(encode_row(...)) per row.

    The FNV state for all rows advances together, one byte position at a
    time, with masked updates wherever a byte exists only for a subset of
    rows (present values, string tails past a row's length).
    """
    _check_subset(table, column_subset)
    n = table.num_rows
    h = np.full(n, _U64_FNV_OFFSET, dtype=np.uint64)
    for c in column_subset:
        col = table.columns[c]
        present = col.validity
        h = _fnv_absorb(h, present)  # presence byte, all rows
        if not present.any():
            continue
        hp = h[present]
        hp = _fnv_absorb(hp, np.uint64(col.dtype.tag))
        if col.dtype.is_fixed_width:
            bmat = _value_byte_matrix(col)[present]
            for j in range(bmat.shape[1]):
                hp = _fnv_absorb(hp, bmat[:, j])
        else:
            offs = col.offsets
            starts = offs[:-1][present]
            lens = (offs[1:] - offs[:-1])[present]
            lens_u = lens.astype(np.uint64)
            for j in range(4):  # u32 little-endian length prefix
                hp = _fnv_absorb(hp, (lens_u >> np.uint64(8 * j)) & np.uint64(0xFF))
            hp = _absorb_utf8_payload(hp, starts, lens, col.data)
        h[present] = hp
    return h


def _absorb_utf8_payload(hp, starts, lens, data, chunk_rows: int = 1 << 14):
    if len(data) == 0 or lens.max(initial=0) == 0:
        return hp
    buf = np.frombuffer(data, dtype=np.uint8)
    for lo in range(0, len(starts), chunk_rows):
        hi = min(lo + chunk_rows, len(starts))
        s, l = starts[lo:hi], lens[lo:hi]
        width = int(l.max())
        if width == 0:
            continue
        pos = np.arange(width, dtype=np.int64)
        idx = np.minimum(s[:, None] + pos[None, :], len(buf) - 1)
        mat = buf[idx]
        alive = pos[None, :] < l[:, None]
        hc = hp[lo:hi]
        for j in range(width):
            m = alive[:, j]
            if m.any():
                hc[m] = _fnv_absorb(hc[m], mat[m, j])
        hp[lo:hi] = hc
    return hp


# ---------------------------------------------------------------------------
# Row-level materialization primitives


def concat(tables: Sequence[Table]) -> Table:
    """Row-wise concatenation; schemas must match by dtype (names from the first)."""
    if not tables:
        raise ValueError("concat needs at least one table")
    first = tables[0]
    for t in tables[1:]:
        if not first.schema.same_types(t.schema):
            raise SchemaMismatchError(
                f"cannot concat {t.schema!r} onto {first.schema!r}"
            )
    if len(tables) == 1:
        return first
    cols = []
    for ci, field in enumerate(first.schema):
        parts = [t.columns[ci] for t in tables]
        validity = np.concatenate([p.validity for p in parts])
        if field.dtype.is_fixed_width:
            values = np.concatenate([p.values for p in parts])
            cols.append(Column(field.dtype, validity, values=values))
        else:
            data = b"".join(p.data for p in parts)
            offsets = np.zeros(len(validity) + 1, dtype=np.int64)
            pos, base = 1, 0
            for p in parts:
                if p.length:
                    offsets[pos : pos + p.length] = p.offsets[1:] + base
                pos += p.length
                base += len(p.data)
            cols.append(Column(field.dtype, validity, offsets=offsets, data=data))
    return Table(first.schema, cols)


def take_rows(table: Table, indices) -> Table:
    """New table whose row i is input row indices[i]; repeats allowed."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= table.num_rows):
        bad = indices[(indices < 0) | (indices >= table.num_rows)][0]
        raise IndexError(f"row index {bad} out of range [0, {table.num_rows})")
    return _gather(table, indices, None)


def gather_padded(table: Table, indices: np.ndarray) -> Table:
    """take_rows where index -1 produces an all-null row (outer-join padding)."""
    return _gather(table, indices, indices < 0)


def _gather(table: Table, indices: np.ndarray, null_mask) -> Table:
    cols = []
    safe = indices if null_mask is None else np.where(null_mask, 0, indices)
    for col in table.columns:
        if table.num_rows == 0:
            validity = np.zeros(len(indices), dtype=np.bool_)
            safe_local = np.zeros(len(indices), dtype=np.int64)
        else:
            validity = col.validity[safe]
            safe_local = safe
        if null_mask is not None:
            validity = validity & ~null_mask
        if col.dtype.is_fixed_width:
            if table.num_rows == 0:
                values = np.zeros(len(indices), dtype=col.dtype.numpy_dtype)
            else:
                values = col.values[safe_local]
            cols.append(Column(col.dtype, validity, values=values))
        else:
            if table.num_rows == 0:
                spans = np.zeros(len(indices), dtype=np.int64)
            else:
                spans = (col.offsets[1:] - col.offsets[:-1])[safe_local]
            spans = np.where(validity, spans, 0)
            offsets = np.zeros(len(indices) + 1, dtype=np.int64)
            np.cumsum(spans, out=offsets[1:])
            chunks = []
            for out_i in np.nonzero(spans > 0)[0]:
                src = int(safe_local[out_i])
                lo = int(col.offsets[src])
                chunks.append(col.data[lo : lo + int(spans[out_i])])
            cols.append(
                Column(col.dtype, validity, offsets=offsets, data=b"".join(chunks))
            )
    return Table(table.schema, cols)


if sys.byteorder != "little":  # pragma: no cover
    raise ImportError("shardtable requires a little-endian host")
