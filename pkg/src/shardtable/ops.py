"""Single-process relational operators over columnar tables.

Implements the operator set every worker runs locally: select, project,
sort, k-way merge, the two join algorithms (hash and sort) for all four
join types, the three distinct set operators, and hash partitioning.

Two internal representations drive the kernels:

* FNV row hashes (`table.hash_rows`) feed the hash join and the
  partitioner. The hash join builds a real hash map keyed by the 64-bit
  row hash of the smaller side, probes with the other, and then verifies
  every candidate pair by comparing the actual key values, so a hash
  collision can never fabricate a match.

* Order codes: dense integers ranking key tuples in the engine's canonical
  order (null first, numeric order with NaN greatest, false < true,
  byte-lexicographic strings). Codes are factorized jointly across the
  tables involved so they are directly comparable; equal code means
  engine-equal key. The sort join, sort_by_keys, merge_sorted, and the set
  operators run on codes.

Join semantics: rows with a null in any key column never match but still
surface as outer padding. Set operators, in contrast, group nulls with
nulls, which is what makes "distinct" well defined for incomplete rows.
Difference is the symmetric difference of the two distinct row sets (not
SQL's EXCEPT). Join and set output order is unspecified; only the multiset
of rows is part of the contract.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .predicate import as_predicate
from .table import (
    DType,
    Schema,
    SchemaMismatchError,
    Table,
    concat,
    gather_padded,
    hash_rows,
    take_rows,
)

__all__ = [
    "JoinType",
    "JoinAlgorithm",
    "JoinConfig",
    "select",
    "project",
    "sort_by_keys",
    "merge_sorted",
    "join",
    "hash_join",
    "sort_join",
    "union_distinct",
    "intersect_distinct",
    "difference_distinct",
    "hash_partition",
]


class JoinType(enum.Enum):
    Inner = "inner"
    Left = "left"
    Right = "right"
    FullOuter = "full_outer"


class JoinAlgorithm(enum.Enum):
    Hash = "hash"
    Sort = "sort"


def _as_key_tuple(keys) -> tuple[int, ...]:
    if isinstance(keys, (int, np.integer)):
        return (int(keys),)
    return tuple(int(k) for k in keys)


@dataclass(frozen=True)
class JoinConfig:
    join_type: JoinType
    algorithm: JoinAlgorithm
    left_keys: tuple[int, ...]
    right_keys: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "left_keys", _as_key_tuple(self.left_keys))
        object.__setattr__(self, "right_keys", _as_key_tuple(self.right_keys))
        if not self.left_keys or len(self.left_keys) != len(self.right_keys):
            raise ValueError("left_keys and right_keys must be equal-length and non-empty")

    @classmethod
    def inner(cls, left_keys, right_keys, algorithm=JoinAlgorithm.Hash):
        return cls(JoinType.Inner, algorithm, left_keys, right_keys)

    @classmethod
    def left(cls, left_keys, right_keys, algorithm=JoinAlgorithm.Hash):
        return cls(JoinType.Left, algorithm, left_keys, right_keys)

    @classmethod
    def right(cls, left_keys, right_keys, algorithm=JoinAlgorithm.Hash):
        return cls(JoinType.Right, algorithm, left_keys, right_keys)

    @classmethod
    def full_outer(cls, left_keys, right_keys, algorithm=JoinAlgorithm.Hash):
        return cls(JoinType.FullOuter, algorithm, left_keys, right_keys)

    def with_algorithm(self, algorithm: JoinAlgorithm) -> "JoinConfig":
        return replace(self, algorithm=algorithm)


# ---------------------------------------------------------------------------
# Row filters and projections


def select(table: Table, pred) -> Table:
    """Rows where the predicate holds, in input order; schema unchanged."""
    mask = as_predicate(pred).evaluate(table)
    mask = np.asarray(mask, dtype=np.bool_)
    if mask.shape != (table.num_rows,):
        raise ValueError("predicate produced a mask of the wrong length")
    return take_rows(table, np.nonzero(mask)[0])


def project(table: Table, columns: Sequence[int]) -> Table:
    """Keep exactly the given columns, in the given order; repeats allowed."""
    columns = [int(c) for c in columns]
    if not columns:
        raise ValueError("project needs a non-empty column selection")
    for c in columns:
        if not 0 <= c < len(table.columns):
            raise IndexError(f"column index {c} out of range [0, {len(table.columns)})")
    schema = Schema([table.schema[c] for c in columns])
    return Table(schema, [table.columns[c] for c in columns])


# ---------------------------------------------------------------------------
# Order codes: joint factorization of key columns into comparable ints

_SIGN_BIT = np.uint64(0x8000000000000000)


def _float_order_bits(values: np.ndarray) -> np.ndarray:
    """Monotone uint64 image of float order; canonical NaN ranks greatest."""
    u = values.view(np.uint64)
    neg = (u >> np.uint64(63)).astype(np.bool_)
    return np.where(neg, ~u, u | _SIGN_BIT)


def _utf8_objects(col) -> np.ndarray:
    out = np.empty(col.length, dtype=object)
    offs, data = col.offsets, col.data
    for i in range(col.length):
        out[i] = data[int(offs[i]) : int(offs[i + 1])]
    return out


def _column_codes(cols) -> list[np.ndarray]:
    """Per-table int64 codes for one key column, factorized jointly.

    Codes are order-isomorphic to the canonical value order; null is -1.
    """
    dtype = cols[0].dtype
    lengths = [c.length for c in cols]
    valid = np.concatenate([c.validity for c in cols])
    if dtype is DType.Bool:
        codes = np.concatenate([c.values.astype(np.int64) for c in cols])
        codes[~valid] = -1
    elif dtype is DType.Utf8:
        objs = np.concatenate([_utf8_objects(c) for c in cols])
        codes = np.full(len(objs), -1, dtype=np.int64)
        vv = objs[valid]
        if vv.size:
            _, inv = np.unique(vv, return_inverse=True)
            codes[valid] = inv
    else:
        raw = np.concatenate([c.values for c in cols])
        keys = raw if dtype is DType.Int64 else _float_order_bits(raw)
        uniq = np.unique(keys[valid])
        codes = np.searchsorted(uniq, keys).astype(np.int64)
        codes[~valid] = -1
    out, pos = [], 0
    for n in lengths:
        out.append(codes[pos : pos + n])
        pos += n
    return out


def _group_codes(parts: Sequence[tuple[Table, Sequence[int]]]):
    """Composite key codes for several (table, key columns) pairs at once.

    Returns (codes, any_null): one int64 array per table where equal code
    means engine-equal key tuple (nulls grouping with nulls), plus a mask of
    rows having a null in any key component. Codes preserve the canonical
    multi-column order, nulls first.
    """
    width = len(parts[0][1])
    for t, keys in parts:
        if len(keys) != width:
            raise ValueError("key column lists must have equal length")
        for k in keys:
            if not 0 <= int(k) < len(t.columns):
                raise IndexError(f"key column {k} out of range")
    per_col = []
    for j in range(width):
        cols = [t.columns[int(keys[j])] for t, keys in parts]
        dtypes = {c.dtype for c in cols}
        if len(dtypes) > 1:
            raise SchemaMismatchError(
                f"key column {j} dtypes differ: {[d.name for d in dtypes]}"
            )
        per_col.append(_column_codes(cols))

    ntab = len(parts)
    any_null = [np.zeros(len(per_col[0][t]), dtype=np.bool_) for t in range(ntab)]
    for col_codes in per_col:
        for t in range(ntab):
            any_null[t] |= col_codes[t] == -1

    combos = [(per_col[0][t] + 1).astype(np.uint64) for t in range(ntab)]
    for col_codes in per_col[1:]:
        card = max(int(c.max(initial=-1)) for c in col_codes) + 2
        card_u = np.uint64(card)
        for t in range(ntab):
            combos[t] = combos[t] * card_u + (col_codes[t] + 1).astype(np.uint64)
        allc = np.concatenate(combos)
        _, inv = np.unique(allc, return_inverse=True)
        pos, fresh = 0, []
        for c in combos:
            fresh.append(inv[pos : pos + len(c)].astype(np.uint64))
            pos += len(c)
        combos = fresh
    return [c.astype(np.int64) for c in combos], any_null


# ---------------------------------------------------------------------------
# Sorting and merging


def sort_by_keys(table: Table, keys: Sequence[int]) -> Table:
    """Stable sort by the canonical key order (nulls first, NaN greatest)."""
    (codes,), _ = _group_codes([(table, list(keys))])
    return take_rows(table, np.argsort(codes, kind="stable"))


def merge_sorted(tables: Sequence[Table], keys: Sequence[int]) -> Table:
    """Stable k-way merge of individually sorted shards.

    Equal keys come out ordered by shard position, then original row order.
    Raises if a shard is not actually sorted.
    """
    tables = list(tables)
    if not tables:
        raise ValueError("merge_sorted needs at least one table")
    combined = concat(tables)
    (codes,), _ = _group_codes([(combined, list(keys))])
    shard_codes, offsets, pos = [], [], 0
    for i, t in enumerate(tables):
        c = codes[pos : pos + t.num_rows]
        if np.any(np.diff(c) < 0):
            raise ValueError(f"merge_sorted input {i} is not sorted on the keys")
        shard_codes.append(c.tolist())
        offsets.append(pos)
        pos += t.num_rows

    streams = [
        [(code, t, i) for i, code in enumerate(shard_codes[t])]
        for t in range(len(tables))
    ]
    merged = heapq.merge(*streams)
    order = np.fromiter(
        (offsets[t] + i for _, t, i in merged), dtype=np.int64, count=pos
    )
    return take_rows(combined, order)


# ---------------------------------------------------------------------------
# Joins


def join(left: Table, right: Table, cfg: JoinConfig) -> Table:
    """Dispatch to the configured join algorithm."""
    if cfg.algorithm is JoinAlgorithm.Hash:
        return hash_join(left, right, cfg)
    return sort_join(left, right, cfg)


def _validate_join(left: Table, right: Table, cfg: JoinConfig) -> None:
    for k in cfg.left_keys:
        if not 0 <= k < len(left.columns):
            raise IndexError(f"left key column {k} out of range")
    for k in cfg.right_keys:
        if not 0 <= k < len(right.columns):
            raise IndexError(f"right key column {k} out of range")
    for lk, rk in zip(cfg.left_keys, cfg.right_keys):
        lt, rt = left.columns[lk].dtype, right.columns[rk].dtype
        if lt is not rt:
            raise SchemaMismatchError(
                f"join key dtype mismatch: left[{lk}]={lt.name}, right[{rk}]={rt.name}"
            )


def _null_key_mask(table: Table, keys: Sequence[int]) -> np.ndarray:
    mask = np.zeros(table.num_rows, dtype=np.bool_)
    for k in keys:
        mask |= ~table.columns[k].validity
    return mask


def _keys_equal(left, left_keys, li, right, right_keys, ri) -> np.ndarray:
    """Exact engine equality of key tuples at the paired row indices."""
    ok = np.ones(len(li), dtype=np.bool_)
    for lk, rk in zip(left_keys, right_keys):
        cl, cr = left.columns[lk], right.columns[rk]
        if cl.dtype is DType.Utf8:
            a = _utf8_objects(cl)[li]
            b = _utf8_objects(cr)[ri]
            eq = a == b
        elif cl.dtype is DType.Float64:
            eq = cl.values[li].view(np.uint64) == cr.values[ri].view(np.uint64)
        else:
            eq = cl.values[li] == cr.values[ri]
        ok &= np.asarray(eq, dtype=np.bool_)
    return ok


def _assemble_join(left, right, li, ri, matched_left, matched_right, join_type):
    extra_l = extra_r = None
    if join_type in (JoinType.Left, JoinType.FullOuter):
        extra_l = np.nonzero(~matched_left)[0]
    if join_type in (JoinType.Right, JoinType.FullOuter):
        extra_r = np.nonzero(~matched_right)[0]

    li_parts, ri_parts = [li], [ri]
    if extra_l is not None:
        li_parts.append(extra_l)
        ri_parts.append(np.full(len(extra_l), -1, dtype=np.int64))
    if extra_r is not None:
        li_parts.append(np.full(len(extra_r), -1, dtype=np.int64))
        ri_parts.append(extra_r)
    li_all = np.concatenate(li_parts)
    ri_all = np.concatenate(ri_parts)

    left_part = gather_padded(left, li_all)
    right_part = gather_padded(right, ri_all)
    schema = Schema(list(left.schema) + list(right.schema))
    return Table(schema, list(left_part.columns) + list(right_part.columns))


def hash_join(left: Table, right: Table, cfg: JoinConfig) -> Table:
    """Hash map on the smaller side's row hashes, probe with the other.

    Candidate pairs from equal hashes are verified value-by-value before
    they are emitted. The build side is the smaller table by row count
    (ties go right), per the usual build-the-smallest heuristic.
    """
    if cfg.algorithm is not JoinAlgorithm.Hash:
        raise ValueError("hash_join requires algorithm=Hash")
    _validate_join(left, right, cfg)

    build_is_right = right.num_rows <= left.num_rows
    if build_is_right:
        build, bkeys = right, cfg.right_keys
        probe, pkeys = left, cfg.left_keys
    else:
        build, bkeys = left, cfg.left_keys
        probe, pkeys = right, cfg.right_keys

    null_b = _null_key_mask(build, bkeys)
    null_p = _null_key_mask(probe, pkeys)
    hb = hash_rows(build, bkeys).tolist()
    hp = hash_rows(probe, pkeys).tolist()

    buckets: dict[int, list[int]] = {}
    for i in np.nonzero(~null_b)[0].tolist():
        buckets.setdefault(hb[i], []).append(i)

    out_b: list[int] = []
    out_p: list[int] = []
    for j in np.nonzero(~null_p)[0].tolist():
        hit = buckets.get(hp[j])
        if hit:
            out_b.extend(hit)
            out_p.extend([j] * len(hit))
    bi = np.asarray(out_b, dtype=np.int64)
    pi = np.asarray(out_p, dtype=np.int64)

    if build_is_right:
        li, ri = pi, bi
    else:
        li, ri = bi, pi
    good = _keys_equal(left, cfg.left_keys, li, right, cfg.right_keys, ri)
    li, ri = li[good], ri[good]

    matched_left = np.zeros(left.num_rows, dtype=np.bool_)
    matched_right = np.zeros(right.num_rows, dtype=np.bool_)
    matched_left[li] = True
    matched_right[ri] = True
    return _assemble_join(left, right, li, ri, matched_left, matched_right, cfg.join_type)


def _cumsum_excl(sizes: np.ndarray) -> np.ndarray:
    out = np.zeros(len(sizes), dtype=np.int64)
    np.cumsum(sizes[:-1], out=out[1:])
    return out


def sort_join(left: Table, right: Table, cfg: JoinConfig) -> Table:
    """Sort both sides on their key codes, then merge matching runs.

    Duplicate keys on both sides yield the full cross product of the two
    runs. Null-key rows sort out of the scan and only reappear as outer
    padding.
    """
    if cfg.algorithm is not JoinAlgorithm.Sort:
        raise ValueError("sort_join requires algorithm=Sort")
    _validate_join(left, right, cfg)

    (cl, cr), (null_l, null_r) = _group_codes(
        [(left, cfg.left_keys), (right, cfg.right_keys)]
    )
    lidx = np.nonzero(~null_l)[0]
    ridx = np.nonzero(~null_r)[0]
    lsorted = lidx[np.argsort(cl[lidx], kind="stable")]
    rsorted = ridx[np.argsort(cr[ridx], kind="stable")]

    ul, startl, cntl = np.unique(cl[lsorted], return_index=True, return_counts=True)
    ur, startr, cntr = np.unique(cr[rsorted], return_index=True, return_counts=True)
    common, il, ir = np.intersect1d(ul, ur, assume_unique=True, return_indices=True)

    nl, nr = cntl[il], cntr[ir]
    sizes = nl * nr
    total = int(sizes.sum())
    gid = np.repeat(np.arange(len(common)), sizes)
    within = np.arange(total, dtype=np.int64) - np.repeat(_cumsum_excl(sizes), sizes)
    nr_g = nr[gid] if total else np.empty(0, dtype=np.int64)
    l_pos = startl[il][gid] + (within // nr_g if total else within)
    r_pos = startr[ir][gid] + (within % nr_g if total else within)
    li = lsorted[l_pos]
    ri = rsorted[r_pos]

    matched_left = np.isin(cl, common) & ~null_l
    matched_right = np.isin(cr, common) & ~null_r
    return _assemble_join(left, right, li, ri, matched_left, matched_right, cfg.join_type)


# ---------------------------------------------------------------------------
# Distinct set operators (full-row identity, nulls group with nulls)


def _check_same_types(a: Table, b: Table, what: str) -> None:
    if not a.schema.same_types(b.schema):
        raise SchemaMismatchError(
            f"{what} requires identical column dtypes: {a.schema!r} vs {b.schema!r}"
        )


def union_distinct(a: Table, b: Table) -> Table:
    """One row per distinct row present in either input."""
    _check_same_types(a, b, "union")
    both = concat([a, b])
    (codes,), _ = _group_codes([(both, range(len(both.columns)))])
    _, first = np.unique(codes, return_index=True)
    return take_rows(both, np.sort(first))


def intersect_distinct(a: Table, b: Table) -> Table:
    """One row per distinct row present in both inputs."""
    _check_same_types(a, b, "intersect")
    (ca, cb), _ = _group_codes(
        [(a, range(len(a.columns))), (b, range(len(b.columns)))]
    )
    ua, firsta = np.unique(ca, return_index=True)
    ub = np.unique(cb)
    common = np.intersect1d(ua, ub, assume_unique=True)
    reps = firsta[np.searchsorted(ua, common)]
    return take_rows(a, np.sort(reps))


def difference_distinct(a: Table, b: Table) -> Table:
    """Symmetric difference: distinct rows present in exactly one input."""
    _check_same_types(a, b, "difference")
    (ca, cb), _ = _group_codes(
        [(a, range(len(a.columns))), (b, range(len(b.columns)))]
    )
    ua, firsta = np.unique(ca, return_index=True)
    ub, firstb = np.unique(cb, return_index=True)
    only_a = np.setdiff1d(ua, ub, assume_unique=True)
    only_b = np.setdiff1d(ub, ua, assume_unique=True)
    part_a = take_rows(a, np.sort(firsta[np.searchsorted(ua, only_a)]))
    part_b = take_rows(b, np.sort(firstb[np.searchsorted(ub, only_b)]))
    return concat([part_a, part_b])


# ---------------------------------------------------------------------------
# Partitioning


def hash_partition(
    table: Table, key_columns: Sequence[int], num_partitions: int
) -> list[Table]:
    """Split rows by FNV key hash mod num_partitions; order kept within parts.

    Engine-equal keys always land in the same partition, which is what lets
    the distributed operators work on shuffled partitions independently.
    """
    if num_partitions < 1:
        raise ValueError("num_partitions must be >= 1")
    pid = (hash_rows(table, list(key_columns)) % np.uint64(num_partitions)).astype(
        np.int64
    )
    order = np.argsort(pid, kind="stable")
    bounds = np.searchsorted(pid[order], np.arange(num_partitions + 1))
    return [
        take_rows(table, order[bounds[i] : bounds[i + 1]])
        for i in range(num_partitions)
    ]
