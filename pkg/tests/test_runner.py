"""Run orchestration helpers: block splits, timing records, output paths."""

import pytest

from shardtable import DType, Field, Schema, Table, concat
from shardtable.oracle import table_atoms
from shardtable.runner import TimingRecord, contiguous_block, output_path


def make(n):
    s = Schema([Field("i", DType.Int64)])
    return Table.from_rows(s, [(i,) for i in range(n)])


@pytest.mark.parametrize("n,world", [(0, 3), (1, 4), (7, 3), (100, 8), (5, 5), (3, 8)])
def test_contiguous_blocks_partition_exactly(n, world):
    t = make(n)
    blocks = [contiguous_block(t, r, world) for r in range(world)]
    assert sum(b.num_rows for b in blocks) == n
    assert table_atoms(concat(blocks)) == table_atoms(t)
    sizes = [b.num_rows for b in blocks]
    assert max(sizes) - min(sizes) <= 1  # balanced to within one row


def test_timing_record_roundtrip():
    rec = TimingRecord(
        op="join", world_size=4, rank=2, rows_in_left=10, rows_in_right=20,
        rows_out=5, op_wall_clock_ms=1.25, total_wall_clock_ms=9.5,
    )
    back = TimingRecord.from_json(rec.to_json())
    assert back == rec


def test_output_path_template():
    assert output_path("out.r{rank}.csv", 3) == "out.r3.csv"
    assert output_path("plain.csv", 0) == "plain.csv"
