"""Binary table frames: round trips, strict decoding, fuzz resistance."""

import random
import struct

import pytest

from shardtable import (
    DType,
    Field,
    FrameError,
    Schema,
    Table,
    deserialize_table,
    serialize_table,
)
from shardtable.oracle import table_atoms

from conftest import rand_table

MAGIC = b"CYTF"


def roundtrip(t: Table) -> Table:
    return deserialize_table(serialize_table(t))


def test_roundtrip_values_and_bytes(rng):
    """Decoded tables must equal the source, and re-encoding must be stable."""
    for _ in range(120):
        t = rand_table(rng)
        blob = serialize_table(t)
        back = deserialize_table(blob)
        assert back.schema.same_types(t.schema)
        assert [f.name for f in back.schema] == [f.name for f in t.schema]
        assert table_atoms(back) == table_atoms(t)
        assert serialize_table(back) == blob


def test_roundtrip_zero_rows():
    s = Schema([Field("a", DType.Int64), Field("s", DType.Utf8), Field("b", DType.Bool)])
    t = Table.from_rows(s, [])
    assert roundtrip(t).num_rows == 0


def test_roundtrip_all_null():
    s = Schema([Field("x", DType.Float64), Field("s", DType.Utf8)])
    t = Table.from_rows(s, [(None, None)] * 9)
    back = roundtrip(t)
    assert table_atoms(back) == table_atoms(t)


def test_frame_header_layout():
    t = Table.from_rows(Schema([Field("a", DType.Int64)]), [(1,)])
    blob = serialize_table(t)
    assert blob[:4] == MAGIC
    version, ncols = struct.unpack_from("<HI", blob, 4)
    (nrows,) = struct.unpack_from("<Q", blob, 10)
    assert (version, ncols, nrows) == (1, 1, 1)


def test_bad_magic_rejected():
    t = Table.from_rows(Schema([Field("a", DType.Int64)]), [(1,)])
    blob = bytearray(serialize_table(t))
    blob[0] ^= 0xFF
    with pytest.raises(FrameError):
        deserialize_table(bytes(blob))


def test_bad_version_rejected():
    t = Table.from_rows(Schema([Field("a", DType.Int64)]), [(1,)])
    blob = bytearray(serialize_table(t))
    blob[4] = 99
    with pytest.raises(FrameError):
        deserialize_table(bytes(blob))


def test_truncation_always_detected(rng):
    t = rand_table(rng, max_rows=12)
    blob = serialize_table(t)
    for cut in range(len(blob)):
        with pytest.raises(FrameError):
            deserialize_table(blob[:cut])


def test_trailing_garbage_rejected():
    t = Table.from_rows(Schema([Field("a", DType.Int64)]), [(1,)])
    with pytest.raises(FrameError):
        deserialize_table(serialize_table(t) + b"\x00")


def test_bool_payload_strictness():
    t = Table.from_rows(Schema([Field("b", DType.Bool)]), [(True,), (False,)])
    blob = bytearray(serialize_table(t))
    blob[-1] = 2  # last byte is the second bool; only 0/1 are legal
    with pytest.raises(FrameError):
        deserialize_table(bytes(blob))


def test_utf8_offset_strictness():
    t = Table.from_rows(Schema([Field("s", DType.Utf8)]), [("ab",), ("cd",)])
    good = serialize_table(t)
    assert roundtrip(t).to_rows() == t.to_rows()
    # corrupt the final offset so it disagrees with the data length
    blob = bytearray(good)
    # offsets live right after the u64 offsets-length field; final offset is last
    # 8 bytes before the u64 data-length field and 4 data bytes
    off_pos = len(blob) - 4 - 8 - 8
    struct.pack_into("<Q", blob, off_pos, 999)
    with pytest.raises(FrameError):
        deserialize_table(bytes(blob))


def test_fuzz_decoder_never_crashes(rng):
    """Arbitrary corruption must surface as FrameError, not a crash."""
    blobs = [serialize_table(rand_table(rng, max_rows=8)) for _ in range(30)]
    trials = 0
    for blob in blobs:
        for _ in range(60):
            b = bytearray(blob)
            mode = rng.randrange(3)
            if mode == 0 and len(b) > 1:
                for _ in range(rng.randint(1, 4)):
                    b[rng.randrange(len(b))] ^= 1 << rng.randrange(8)
            elif mode == 1:
                b = b[: rng.randrange(len(b) + 1)]
            else:
                b = bytearray(rng.randbytes(rng.randrange(0, 64)))
            trials += 1
            try:
                deserialize_table(bytes(b))
            except FrameError:
                pass
    assert trials >= 1800
