"""Distributed operators: hash partition + all-to-all + local operator.

Every worker holds one partition of a logical table; the logical table is
the multiset union of the partitions, with no global order. Keyed
operators first co-locate rows that can interact (equal join keys, or
equal whole rows for the set operators) by hash-partitioning on the
relevant columns and exchanging partitions, then run the ordinary local
operator on what arrived. Select and project never touch the network.

Because engine-equal keys hash equally, after the shuffle no key exists
on two workers, so the local results are disjoint pieces of the global
answer: gathering them is multiset-equal to running the serial operator
on gathered inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .comm import WorkerContext, all_to_all, gather
from .ops import (
    JoinConfig,
    difference_distinct,
    hash_partition,
    intersect_distinct,
    join,
    project,
    select,
    union_distinct,
)
from .table import Table

__all__ = [
    "DistributedTable",
    "distributed_join",
    "distributed_union",
    "distributed_intersect",
    "distributed_difference",
    "distributed_select",
    "distributed_project",
]


@dataclass
class DistributedTable:
    """One worker's view of a logical table: its context plus its partition."""

    ctx: WorkerContext
    local: Table

    def gather(self, root: int = 0) -> Table | None:
        """Collective: the whole logical table at root, None elsewhere."""
        return gather(self.ctx, self.local, root)

    @property
    def num_local_rows(self) -> int:
        return self.local.num_rows


def _same_ctx(a: DistributedTable, b: DistributedTable) -> WorkerContext:
    if a.ctx is not b.ctx:
        raise ValueError("distributed operands must share one worker context")
    return a.ctx


def _shuffle(ctx: WorkerContext, table: Table, keys: Sequence[int]) -> Table:
    parts = hash_partition(table, keys, ctx.world_size)
    return all_to_all(ctx, parts)


def distributed_join(
    left: DistributedTable, right: DistributedTable, cfg: JoinConfig
) -> DistributedTable:
    """Shuffle both sides on their join keys, then join locally."""
    ctx = _same_ctx(left, right)
    left_in = _shuffle(ctx, left.local, cfg.left_keys)
    right_in = _shuffle(ctx, right.local, cfg.right_keys)
    return DistributedTable(ctx, join(left_in, right_in, cfg))


def _set_op(a: DistributedTable, b: DistributedTable, local_op) -> DistributedTable:
    # Whole-row hash partitioning: duplicate rows across workers co-locate,
    # which is what makes per-worker distinct results globally distinct.
    ctx = _same_ctx(a, b)
    all_cols_a = range(len(a.local.columns))
    all_cols_b = range(len(b.local.columns))
    a_in = _shuffle(ctx, a.local, all_cols_a)
    b_in = _shuffle(ctx, b.local, all_cols_b)
    return DistributedTable(ctx, local_op(a_in, b_in))


def distributed_union(a: DistributedTable, b: DistributedTable) -> DistributedTable:
    return _set_op(a, b, union_distinct)


def distributed_intersect(a: DistributedTable, b: DistributedTable) -> DistributedTable:
    return _set_op(a, b, intersect_distinct)


def distributed_difference(a: DistributedTable, b: DistributedTable) -> DistributedTable:
    """Symmetric difference of the distinct global row sets."""
    return _set_op(a, b, difference_distinct)


def distributed_select(t: DistributedTable, pred) -> DistributedTable:
    """Per-partition filter; sends zero frames."""
    return DistributedTable(t.ctx, select(t.local, pred))


def distributed_project(t: DistributedTable, columns: Sequence[int]) -> DistributedTable:
    """Per-partition column selection; sends zero frames."""
    return DistributedTable(t.ctx, project(t.local, columns))
