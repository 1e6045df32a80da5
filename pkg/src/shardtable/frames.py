"""TableFrame: the binary wire encoding of one table.

Layout, all integers little-endian:

    magic "CYTF" | version u16 = 1 | column count u32 | row count u64
    then per column:
        dtype tag u8 (0=Int64, 1=Float64, 2=Utf8, 3=Bool)
        name length u16, UTF-8 name bytes
        validity length u64, validity bytes (LSB-first bits, whole bytes)
        Int64/Float64: values length u64, raw little-endian values
        Bool:          one byte per value (row count is already known)
        Utf8:          offsets length u64, (rows+1) u64 offsets,
                       data length u64, UTF-8 bytes

Encoding is deterministic: tables with equal values produce equal bytes,
because column buffers are canonical (zeroed null slots, normalized floats,
empty null string spans). The decoder validates every declared length
against the bytes actually available before reading, so corrupt or
truncated input raises FrameError rather than crashing or over-allocating.
"""

from __future__ import annotations

import struct

import numpy as np

from .table import Column, DType, Field, Schema, Table

__all__ = ["FRAME_MAGIC", "FRAME_VERSION", "FrameError", "serialize_table", "deserialize_table"]

FRAME_MAGIC = b"CYTF"
FRAME_VERSION = 1

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class FrameError(ValueError):
    """Raised for any malformed, truncated, or oversized frame."""


def _pack_validity(validity: np.ndarray) -> bytes:
    return np.packbits(validity.view(np.uint8), bitorder="little").tobytes()


def serialize_table(table: Table) -> bytes:
    out = bytearray()
    out += FRAME_MAGIC
    out += _U16.pack(FRAME_VERSION)
    out += _U32.pack(len(table.columns))
    out += _U64.pack(table.num_rows)
    for field, col in zip(table.schema, table.columns):
        out.append(col.dtype.tag)
        name = field.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise FrameError(f"column name too long to encode: {len(name)} bytes")
        out += _U16.pack(len(name))
        out += name
        vbytes = _pack_validity(col.validity)
        out += _U64.pack(len(vbytes))
        out += vbytes
        if col.dtype is DType.Bool:
            out += col.values.view(np.uint8).tobytes()
        elif col.dtype is DType.Utf8:
            obytes = col.offsets.astype(np.uint64).tobytes()
            out += _U64.pack(len(obytes))
            out += obytes
            out += _U64.pack(len(col.data))
            out += col.data
        else:
            vals = col.values.tobytes()
            out += _U64.pack(len(vals))
            out += vals
    return bytes(out)


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise FrameError(
                f"truncated frame: need {n} bytes for {what} at offset {self.pos},"
                f" have {len(self.buf) - self.pos}"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return _U16.unpack(self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return _U64.unpack(self.take(8, what))[0]


def _decode_column(r: _Reader, nrows: int) -> tuple[Field, Column]:
    tag = r.u8("dtype tag")
    try:
        dtype = DType(tag)
    except ValueError:
        raise FrameError(f"unknown dtype tag {tag}") from None
    name_len = r.u16("name length")
    try:
        name = r.take(name_len, "column name").decode("utf-8")
    except UnicodeDecodeError as e:
        raise FrameError(f"column name is not valid UTF-8: {e}") from None

    vlen = r.u64("validity length")
    expect_vlen = (nrows + 7) // 8
    if vlen != expect_vlen:
        raise FrameError(f"validity length {vlen} != expected {expect_vlen} for {nrows} rows")
    vbytes = r.take(vlen, "validity bitmap")
    validity = np.unpackbits(
        np.frombuffer(vbytes, dtype=np.uint8), count=nrows, bitorder="little"
    ).astype(np.bool_)

    if dtype is DType.Bool:
        raw = np.frombuffer(r.take(nrows, "bool values"), dtype=np.uint8)
        if np.any(raw > 1):
            raise FrameError("bool value byte outside {0, 1}")
        return Field(name, dtype), Column(dtype, validity, values=raw.astype(np.bool_))

    if dtype is DType.Utf8:
        olen = r.u64("offsets length")
        if olen != 8 * (nrows + 1):
            raise FrameError(f"offsets length {olen} != expected {8 * (nrows + 1)}")
        offsets = np.frombuffer(r.take(olen, "offsets"), dtype="<u8")
        if offsets.size and offsets[0] != 0:
            raise FrameError("offsets[0] must be 0")
        if np.any(offsets[1:] < offsets[:-1]):
            raise FrameError("offsets must be monotone non-decreasing")
        dlen = r.u64("string data length")
        if offsets.size and int(offsets[-1]) != dlen:
            raise FrameError(f"final offset {int(offsets[-1])} != data length {dlen}")
        data = r.take(dlen, "string data")
        return Field(name, dtype), Column(
            dtype, validity, offsets=offsets.astype(np.int64), data=data
        )

    blen = r.u64("values length")
    if blen != 8 * nrows:
        raise FrameError(f"values length {blen} != expected {8 * nrows}")
    raw = r.take(blen, "values")
    values = np.frombuffer(raw, dtype="<i8" if dtype is DType.Int64 else "<f8")
    return Field(name, dtype), Column(dtype, validity, values=values)


def deserialize_table(frame: bytes) -> Table:
    r = _Reader(bytes(frame))
    magic = r.take(4, "magic")
    if magic != FRAME_MAGIC:
        raise FrameError(f"bad magic {magic!r}, expected {FRAME_MAGIC!r}")
    version = r.u16("version")
    if version != FRAME_VERSION:
        raise FrameError(f"unsupported frame version {version}")
    ncols = r.u32("column count")
    nrows = r.u64("row count")

    fields, cols = [], []
    for _ in range(ncols):
        try:
            field, col = _decode_column(r, nrows)
        except FrameError:
            raise
        except ValueError as e:
            # Column constructor validation on hostile buffers.
            raise FrameError(str(e)) from None
        fields.append(field)
        cols.append(col)
    if r.pos != len(r.buf):
        raise FrameError(f"{len(r.buf) - r.pos} trailing bytes after last column")
    if not fields:
        raise FrameError("frame declares zero columns")
    return Table(Schema(fields), cols)
