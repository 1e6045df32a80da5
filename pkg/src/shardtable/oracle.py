"""Reference implementations used to cross-check the engine.

Everything here is deliberately written the slow, obvious way in plain
Python, with its own notion of value normalization, so it shares no code
path with the vectorized kernels it validates. `verify` and the test suite
compare engine output against these.

Rows are compared as tuples of atoms. An atom tags the dtype and carries a
normalized value (float NaNs become a canonical bit pattern, -0.0 becomes
+0.0), so tuple equality matches the engine's row-equality rules, including
null == null and NaN == NaN.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from typing import Sequence

from .table import DType, Table

NULL_ATOM = ("null",)


def cell_atom(dtype: DType, value):
    """Hashable, exactly comparable stand-in for one cell."""
    if value is None:
        return NULL_ATOM
    if dtype is DType.Int64:
        return ("i", int(value))
    if dtype is DType.Float64:
        f = float(value)
        if math.isnan(f):
            bits = 0x7FF8000000000000
        else:
            if f == 0.0:
                f = 0.0
            bits = struct.unpack("<Q", struct.pack("<d", f))[0]
        return ("f", bits)
    if dtype is DType.Bool:
        return ("b", bool(value))
    return ("s", str(value))


def row_atoms(table: Table, i: int, column_subset: Sequence[int] | None = None) -> tuple:
    cols = range(len(table.columns)) if column_subset is None else column_subset
    return tuple(
        cell_atom(table.columns[c].dtype, table.columns[c].value(i)) for c in cols
    )


def table_atoms(table: Table, column_subset: Sequence[int] | None = None) -> list[tuple]:
    return [row_atoms(table, i, column_subset) for i in range(table.num_rows)]


def multiset(table: Table) -> Counter:
    """Canonical full-row multiset; engine-equal tables give equal counters."""
    return Counter(table_atoms(table))


def _key_has_null(atoms: tuple) -> bool:
    return any(a == NULL_ATOM for a in atoms)


def nested_loop_join(
    left: Table,
    right: Table,
    left_keys: Sequence[int],
    right_keys: Sequence[int],
    join_type: str,
) -> list[tuple]:
    """O(n*m) join over atom tuples; null keys never match.

    Returns full output rows as atom tuples (left atoms then right atoms,
    padding with null atoms for the outer variants).
    """
    lk = [row_atoms(left, i, left_keys) for i in range(left.num_rows)]
    rk = [row_atoms(right, j, right_keys) for j in range(right.num_rows)]
    lrows = table_atoms(left)
    rrows = table_atoms(right)
    lpad = (NULL_ATOM,) * len(left.columns)
    rpad = (NULL_ATOM,) * len(right.columns)

    out = []
    right_matched = [False] * right.num_rows
    for i in range(left.num_rows):
        hit = False
        if not _key_has_null(lk[i]):
            for j in range(right.num_rows):
                if lk[i] == rk[j] and not _key_has_null(rk[j]):
                    out.append(lrows[i] + rrows[j])
                    hit = True
                    right_matched[j] = True
        if not hit and join_type in ("left", "full_outer"):
            out.append(lrows[i] + rpad)
    if join_type in ("right", "full_outer"):
        for j in range(right.num_rows):
            if not right_matched[j]:
                out.append(lpad + rrows[j])
    return out


def grouped_join(
    left: Table,
    right: Table,
    left_keys: Sequence[int],
    right_keys: Sequence[int],
    join_type: str,
) -> list[tuple]:
    """Same semantics as nested_loop_join via dict grouping; usable at scale."""
    groups: dict[tuple, list[int]] = {}
    for j in range(right.num_rows):
        k = row_atoms(right, j, right_keys)
        if not _key_has_null(k):
            groups.setdefault(k, []).append(j)
    lrows = table_atoms(left)
    rrows = table_atoms(right)
    lpad = (NULL_ATOM,) * len(left.columns)
    rpad = (NULL_ATOM,) * len(right.columns)

    out = []
    right_matched = [False] * right.num_rows
    for i in range(left.num_rows):
        k = row_atoms(left, i, left_keys)
        js = groups.get(k, []) if not _key_has_null(k) else []
        for j in js:
            out.append(lrows[i] + rrows[j])
            right_matched[j] = True
        if not js and join_type in ("left", "full_outer"):
            out.append(lrows[i] + rpad)
    if join_type in ("right", "full_outer"):
        for j in range(right.num_rows):
            if not right_matched[j]:
                out.append(lpad + rrows[j])
    return out


def set_union(a: Table, b: Table) -> list[tuple]:
    seen = {}
    for rows in (table_atoms(a), table_atoms(b)):
        for r in rows:
            seen.setdefault(r, r)
    return list(seen.values())


def set_intersect(a: Table, b: Table) -> list[tuple]:
    in_b = set(table_atoms(b))
    out, seen = [], set()
    for r in table_atoms(a):
        if r in in_b and r not in seen:
            seen.add(r)
            out.append(r)
    return out


def set_difference(a: Table, b: Table) -> list[tuple]:
    """Symmetric difference of distinct rows."""
    sa = set(table_atoms(a))
    sb = set(table_atoms(b))
    out, seen = [], set()
    for r in table_atoms(a) + table_atoms(b):
        if (r in sa) != (r in sb) and r not in seen:
            seen.add(r)
            out.append(r)
    return out


def row_filter(table: Table, keep) -> list[tuple]:
    """Row-loop select oracle; `keep` takes the row's python values."""
    out = []
    for i in range(table.num_rows):
        if keep(table.row(i)):
            out.append(row_atoms(table, i))
    return out


def column_pick(table: Table, columns: Sequence[int]) -> list[tuple]:
    return [row_atoms(table, i, columns) for i in range(table.num_rows)]


def join_output_counter(rows: list[tuple]) -> Counter:
    return Counter(rows)


def sorted_atoms_key(atoms: tuple):
    """Engine sort order over rows: null first, NaN greatest, bytes-lex text.

    Per column the key is (presence, nan-rank, value); the value slot only
    ever meets values of the same dtype, so comparisons stay well typed.
    """
    key = []
    for a in atoms:
        if a == NULL_ATOM:
            key.append((0, 0, 0))
        else:
            tag, v = a
            if tag == "f":
                f = struct.unpack("<d", struct.pack("<Q", v))[0]
                key.append((1, 1, 0.0) if math.isnan(f) else (1, 0, f))
            elif tag == "s":
                key.append((1, 0, v.encode("utf-8")))
            else:
                key.append((1, 0, v))
    return key
