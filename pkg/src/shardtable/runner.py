"""End-to-end worker pipelines for the command-line harness.

A run is: load (or receive) this worker's input partition, execute one
distributed operator collectively, write the output partition, and emit a
timing record. The operator wall clock starts after all inputs are in
memory and all workers have passed a barrier, and stops when the local
output table exists; it therefore includes the shuffle and local compute
but excludes file I/O on both ends.

Two hosting modes share the same worker function: `local` hosts all
world_size workers as threads of one process (the developer/CI path),
`tcp` executes a single externally launched rank that meshes with its
peers over sockets.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .comm import WorkerContext, init_context, run_local_cluster
from .dist import (
    DistributedTable,
    distributed_difference,
    distributed_intersect,
    distributed_join,
    distributed_project,
    distributed_select,
    distributed_union,
)
from .ops import JoinAlgorithm, JoinConfig, JoinType
from .predicate import parse_predicate
from .table import Table, take_rows
from .tableio import CsvReadOptions, read_csv, read_csv_many, write_csv

__all__ = [
    "RunConfig",
    "TimingRecord",
    "PAIR_OPS",
    "UNARY_OPS",
    "contiguous_block",
    "run_local",
    "run_tcp_rank",
]

PAIR_OPS = ("join", "union", "intersect", "difference")
UNARY_OPS = ("select", "project")


@dataclass
class TimingRecord:
    op: str
    world_size: int
    rank: int
    rows_in_left: int
    rows_in_right: int
    rows_out: int
    op_wall_clock_ms: float
    total_wall_clock_ms: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "TimingRecord":
        raw = json.loads(line)
        return cls(**{k: raw[k] for k in cls.__dataclass_fields__})


@dataclass
class RunConfig:
    op: str
    left_inputs: list[str] = field(default_factory=list)
    right_inputs: list[str] | None = None
    world_size: int = 1
    transport: str = "local"
    rank: int | None = None
    hosts_file: str | None = None
    output_template: str | None = None
    timing_path: str | None = None
    join_type: JoinType = JoinType.Inner
    join_algorithm: JoinAlgorithm = JoinAlgorithm.Hash
    left_keys: tuple[int, ...] = (0,)
    right_keys: tuple[int, ...] = (0,)
    predicate: str | None = None
    columns: list[int] | None = None
    csv: CsvReadOptions = field(default_factory=CsvReadOptions)
    connect_timeout: float = 30.0
    recv_timeout: float = 300.0

    def validate(self) -> None:
        if self.op not in PAIR_OPS + UNARY_OPS:
            raise ValueError(f"unknown op {self.op!r}")
        if self.world_size < 1:
            raise ValueError("world_size must be >= 1")
        if not self.left_inputs:
            raise ValueError("at least one left input path is required")
        if self.op in PAIR_OPS and self.op != "join":
            if not self.right_inputs:
                raise ValueError(f"{self.op} needs a right input")
        if self.op == "join" and not self.right_inputs:
            raise ValueError("join needs a right input")
        if self.op == "select" and not self.predicate:
            raise ValueError("select needs --predicate")
        if self.op == "project" and not self.columns:
            raise ValueError("project needs --columns")
        if self.transport not in ("local", "tcp"):
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.transport == "tcp" and self.world_size > 1:
            if self.rank is None or self.hosts_file is None:
                raise ValueError("tcp transport needs --rank and --hosts-file")
        for paths, side in ((self.left_inputs, "left"), (self.right_inputs or [], "right")):
            if paths and len(paths) not in (1, self.world_size):
                raise ValueError(
                    f"{side} inputs: give one path or exactly world_size={self.world_size}"
                )
        if (
            self.output_template
            and self.world_size > 1
            and "{rank}" not in self.output_template
        ):
            raise ValueError("output template needs a {rank} placeholder")


def contiguous_block(table: Table, rank: int, world_size: int) -> Table:
    """Rows [round(r*n/w), round((r+1)*n/w)) — the canonical block split."""
    n = table.num_rows
    lo = round(rank * n / world_size)
    hi = round((rank + 1) * n / world_size)
    return take_rows(table, np.arange(lo, hi))


def _load_side(paths: Sequence[str], rank: int, world_size: int, opts: CsvReadOptions) -> Table:
    if len(paths) == world_size:
        return read_csv(paths[rank], opts)
    whole = read_csv(paths[0], opts)
    return contiguous_block(whole, rank, world_size)


def _op_callable(cfg: RunConfig) -> Callable[[WorkerContext, Table, Table | None], Table]:
    if cfg.op == "join":
        jc = JoinConfig(cfg.join_type, cfg.join_algorithm, cfg.left_keys, cfg.right_keys)
        return lambda ctx, l, r: distributed_join(
            DistributedTable(ctx, l), DistributedTable(ctx, r), jc
        ).local
    if cfg.op in ("union", "intersect", "difference"):
        fn = {
            "union": distributed_union,
            "intersect": distributed_intersect,
            "difference": distributed_difference,
        }[cfg.op]
        return lambda ctx, l, r: fn(
            DistributedTable(ctx, l), DistributedTable(ctx, r)
        ).local
    if cfg.op == "select":
        pred = parse_predicate(cfg.predicate)
        return lambda ctx, l, r: distributed_select(DistributedTable(ctx, l), pred).local
    cols = list(cfg.columns or [])
    return lambda ctx, l, r: distributed_project(DistributedTable(ctx, l), cols).local


def output_path(template: str, rank: int) -> str:
    return template.replace("{rank}", str(rank))


def _execute(ctx: WorkerContext, cfg: RunConfig, left: Table, right: Table | None,
             op_fn, total_start: float) -> tuple[TimingRecord, Table]:
    ctx.barrier()  # align operator start across the world
    t0 = time.perf_counter()
    result = op_fn(ctx, left, right)
    op_ms = (time.perf_counter() - t0) * 1000.0

    written = None
    if cfg.output_template:
        written = output_path(cfg.output_template, ctx.rank)
        write_csv(result, written, delimiter=cfg.csv.delimiter)
    total_ms = (time.perf_counter() - total_start) * 1000.0
    rec = TimingRecord(
        op=cfg.op,
        world_size=ctx.world_size,
        rank=ctx.rank,
        rows_in_left=left.num_rows,
        rows_in_right=right.num_rows if right is not None else 0,
        rows_out=result.num_rows,
        op_wall_clock_ms=op_ms,
        total_wall_clock_ms=total_ms,
    )
    return rec, result


def _remove_outputs(cfg: RunConfig, ranks: Sequence[int]) -> None:
    if not cfg.output_template:
        return
    for r in ranks:
        try:
            os.remove(output_path(cfg.output_template, r))
        except OSError:
            pass


def _write_timing(path: str, records: Sequence[TimingRecord], rank: int | None) -> None:
    target = path.replace("{rank}", str(rank)) if rank is not None else path
    mode = "a" if "{rank}" not in path and rank is not None else "w"
    with open(target, mode, encoding="utf-8") as f:
        f.write("".join(rec.to_json() + "\n" for rec in records))


def run_local(cfg: RunConfig) -> list[TimingRecord]:
    """Host all world_size workers as threads; returns records in rank order.

    On any worker failure, every partial output file is removed and the
    first failure is re-raised.
    """
    cfg.validate()
    op_fn = _op_callable(cfg)
    total_start = time.perf_counter()
    left_whole = read_csv_many(cfg.left_inputs, cfg.csv)
    right_whole = (
        read_csv_many(cfg.right_inputs, cfg.csv) if cfg.right_inputs else None
    )
    w = cfg.world_size

    def side_for(whole: list[Table], rank: int) -> Table:
        if len(whole) == w:
            return whole[rank]
        return contiguous_block(whole[0], rank, w)

    def worker(ctx: WorkerContext):
        left = side_for(left_whole, ctx.rank)
        right = side_for(right_whole, ctx.rank) if right_whole is not None else None
        rec, _ = _execute(ctx, cfg, left, right, op_fn, total_start)
        return rec

    try:
        records = run_local_cluster(w, worker, recv_timeout=cfg.recv_timeout)
    except BaseException:
        _remove_outputs(cfg, range(w))
        raise
    if cfg.timing_path:
        _write_timing(cfg.timing_path, records, rank=None)
    return records


def run_tcp_rank(cfg: RunConfig) -> TimingRecord:
    """Execute one externally launched rank of a TCP world."""
    cfg.validate()
    op_fn = _op_callable(cfg)
    rank = cfg.rank if cfg.world_size > 1 else 0
    addresses: list[str] | None = None
    if cfg.world_size > 1:
        with open(cfg.hosts_file, "r", encoding="utf-8") as f:
            addresses = [line.strip() for line in f if line.strip()]
    ctx = init_context(
        cfg.world_size,
        rank,
        "tcp",
        addresses,
        connect_timeout=cfg.connect_timeout,
        recv_timeout=cfg.recv_timeout,
    )
    try:
        total_start = time.perf_counter()
        left = _load_side(cfg.left_inputs, ctx.rank, ctx.world_size, cfg.csv)
        right = (
            _load_side(cfg.right_inputs, ctx.rank, ctx.world_size, cfg.csv)
            if cfg.right_inputs
            else None
        )
        rec, _ = _execute(ctx, cfg, left, right, op_fn, total_start)
    except BaseException:
        _remove_outputs(cfg, [rank])
        raise
    finally:
        ctx.close()
    if cfg.timing_path:
        _write_timing(cfg.timing_path, [rec], rank=rank)
    return rec
