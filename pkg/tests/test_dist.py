"""Distributed operators must equal the serial ones, gathered, exactly."""

import random
from collections import Counter

import pytest

from shardtable import (
    DistributedTable,
    JoinAlgorithm,
    JoinConfig,
    JoinType,
    Table,
    concat,
    difference_distinct,
    distributed_difference,
    distributed_intersect,
    distributed_join,
    distributed_project,
    distributed_select,
    distributed_union,
    intersect_distinct,
    join,
    project,
    run_local_cluster,
    select,
    union_distinct,
)
from shardtable import oracle

from conftest import keyed_pair, rand_table, same_schema_pair

WORLD_SIZES = [1, 2, 3, 4, 8]


def block_split(table: Table, world: int) -> list[Table]:
    """Contiguous row blocks, one per rank, concat-identical to the input."""
    import numpy as np
    from shardtable import take_rows

    n = table.num_rows
    bounds = [round(r * n / world) for r in range(world + 1)]
    return [
        take_rows(table, np.arange(bounds[r], bounds[r + 1], dtype=np.int64))
        for r in range(world)
    ]


def gather_distributed(world, make_result):
    """Run make_result(ctx) on an in-process cluster, gather at root 0."""

    def worker(ctx):
        out = make_result(ctx)
        return out.gather(root=0)

    results = run_local_cluster(world, worker)
    return results[0]


@pytest.mark.parametrize("world", WORLD_SIZES)
def test_distributed_join_equals_serial(world):
    rng = random.Random(1000 + world)
    left, right, lk, rk = keyed_pair(rng, max_rows=50)
    for jt in JoinType:
        cfg = JoinConfig(jt, JoinAlgorithm.Hash, lk, rk)
        serial = join(left, right, cfg)
        lparts, rparts = block_split(left, world), block_split(right, world)

        def make(ctx):
            dl = DistributedTable(ctx, lparts[ctx.rank])
            dr = DistributedTable(ctx, rparts[ctx.rank])
            return distributed_join(dl, dr, cfg)

        got = gather_distributed(world, make)
        assert Counter(oracle.table_atoms(got)) == Counter(oracle.table_atoms(serial))


@pytest.mark.parametrize("world", [1, 3, 4])
@pytest.mark.parametrize(
    "dist_op,local_op",
    [
        (distributed_union, union_distinct),
        (distributed_intersect, intersect_distinct),
        (distributed_difference, difference_distinct),
    ],
)
def test_distributed_set_ops_equal_serial(world, dist_op, local_op):
    rng = random.Random(hash((dist_op.__name__, world)) & 0xFFFF)
    a, b = same_schema_pair(rng, max_rows=40)
    serial = local_op(a, b)
    aparts, bparts = block_split(a, world), block_split(b, world)

    def make(ctx):
        da = DistributedTable(ctx, aparts[ctx.rank])
        db = DistributedTable(ctx, bparts[ctx.rank])
        return dist_op(da, db)

    got = gather_distributed(world, make)
    assert Counter(oracle.table_atoms(got)) == Counter(oracle.table_atoms(serial))
    atoms = oracle.table_atoms(got)
    assert len(set(atoms)) == len(atoms)


@pytest.mark.parametrize("world", [1, 2, 4])
def test_distributed_select_project_zero_communication(world):
    rng = random.Random(77 + world)
    t = rand_table(rng, max_rows=40)
    while t.num_rows == 0 or len(t.columns) < 2:
        t = rand_table(rng, max_rows=40)
    parts = block_split(t, world)
    frames = {}

    def worker(ctx):
        dt = DistributedTable(ctx, parts[ctx.rank])
        picked = distributed_project(dt, [0]).local
        frames[ctx.rank] = (ctx.transport.frames_sent, ctx.transport.frames_received)
        return picked

    results = run_local_cluster(world, worker)
    assert all(sent == 0 and recv == 0 for sent, recv in frames.values())
    assert Counter(oracle.table_atoms(concat(results))) == Counter(
        oracle.table_atoms(project(t, [0]))
    )


@pytest.mark.parametrize("world", [1, 3])
def test_distributed_select_equals_serial(world):
    rng = random.Random(55 + world)
    from shardtable import DType, Field, Schema

    s = Schema([Field("k", DType.Int64), Field("x", DType.Float64)])
    t = rand_table(rng, s, max_rows=60)
    pred = "k > 0 or x < 0.25"
    serial = select(t, pred)
    parts = block_split(t, world)

    def make(ctx):
        return distributed_select(DistributedTable(ctx, parts[ctx.rank]), pred)

    got = gather_distributed(world, make)
    assert Counter(oracle.table_atoms(got)) == Counter(oracle.table_atoms(serial))


def test_shuffle_colocates_equal_keys():
    """After a keyed shuffle every key lives on exactly one rank."""
    rng = random.Random(3)
    left, right, lk, rk = keyed_pair(rng, max_rows=80)
    world = 4
    parts = block_split(left, world)
    from shardtable.dist import _shuffle

    key_homes = {}

    def worker(ctx):
        shuffled = _shuffle(ctx, parts[ctx.rank], lk)
        for i in range(shuffled.num_rows):
            key = oracle.row_atoms(shuffled, i, lk)
            key_homes.setdefault(key, set()).add(ctx.rank)
        return shuffled

    results = run_local_cluster(world, worker)
    assert sum(t.num_rows for t in results) == left.num_rows
    for key, homes in key_homes.items():
        assert len(homes) == 1, f"key {key} split across ranks {homes}"


def test_distributed_table_num_local_rows():
    from shardtable import DType, Field, Schema

    s = Schema([Field("a", DType.Int64)])

    def worker(ctx):
        t = Table.from_rows(s, [(ctx.rank,)] * (ctx.rank + 1))
        return DistributedTable(ctx, t).num_local_rows

    assert run_local_cluster(3, worker) == [1, 2, 3]
