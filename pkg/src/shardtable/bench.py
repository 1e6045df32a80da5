"""Weak- and strong-scaling benchmark orchestration.

Weak scaling holds rows per worker constant (total grows with the world),
strong scaling holds total rows constant (per-worker share shrinks). For
each requested world size the driver runs the operator `reps` times on
deterministic generated inputs, takes the max op wall clock across workers
for each rep (the BSP step is as slow as its slowest worker), and reports
the median of those maxima.

The default transport is tcp with one subprocess per rank on loopback.
Threaded in-process workers share one interpreter lock, so `local` mode
cannot show real speedup on CPU-bound operators; it remains available for
plumbing tests. Each rank regenerates exactly its block of the logical
input in memory, so the logical table is identical across world sizes and
no load time pollutes the measurement.
"""

from __future__ import annotations

import json
import os
import socket
import statistics
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field

from .comm import run_local_cluster
from .dist import (
    DistributedTable,
    distributed_difference,
    distributed_intersect,
    distributed_join,
    distributed_project,
    distributed_select,
    distributed_union,
)
from .ops import JoinConfig
from .predicate import parse_predicate
from .runner import TimingRecord
from .tableio import generate_table_slice

__all__ = ["BenchConfig", "run_bench", "bench_rank_worker", "REPORT_COMMENT"]

REPORT_COMMENT = (
    "# op wall clock includes the all-to-all shuffle and local compute;"
    " input materialization and output writes are excluded"
)

BENCH_OPS = ("join", "union", "intersect", "difference", "select", "project")

DEFAULT_WEAK_ROWS = 100_000
DEFAULT_STRONG_ROWS = 2_000_000


@dataclass
class BenchConfig:
    mode: str = "strong"
    op: str = "join"
    workers: list[int] = field(default_factory=lambda: [1, 2, 4])
    reps: int = 3
    rows_per_worker: int = DEFAULT_WEAK_ROWS
    total_rows: int = DEFAULT_STRONG_ROWS
    key_cardinality: int | None = None
    seed: int = 1
    transport: str = "tcp"
    report_path: str | None = None
    connect_timeout: float = 30.0
    recv_timeout: float = 300.0

    def validate(self) -> None:
        if self.mode not in ("weak", "strong"):
            raise ValueError(f"mode must be weak or strong, got {self.mode!r}")
        if self.op not in BENCH_OPS:
            raise ValueError(f"unknown bench op {self.op!r}")
        if not self.workers or any(w < 1 for w in self.workers):
            raise ValueError("workers must be a non-empty list of positive sizes")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.transport not in ("tcp", "local"):
            raise ValueError(f"unknown transport {self.transport!r}")

    def total_for(self, world_size: int) -> int:
        if self.mode == "weak":
            return self.rows_per_worker * world_size
        return self.total_rows


def _bench_op_fn(op: str):
    if op == "join":
        cfg = JoinConfig.inner(0, 0)
        return lambda ctx, l, r: distributed_join(
            DistributedTable(ctx, l), DistributedTable(ctx, r), cfg
        ).local
    if op in ("union", "intersect", "difference"):
        fn = {
            "union": distributed_union,
            "intersect": distributed_intersect,
            "difference": distributed_difference,
        }[op]
        return lambda ctx, l, r: fn(
            DistributedTable(ctx, l), DistributedTable(ctx, r)
        ).local
    if op == "select":
        pred = parse_predicate("#1 > 0.5")
        return lambda ctx, l, r: distributed_select(DistributedTable(ctx, l), pred).local
    return lambda ctx, l, r: distributed_project(DistributedTable(ctx, l), [0, 1]).local


def bench_rank_worker(ctx, op: str, total_rows: int, seed: int,
                      key_cardinality: int | None, reps: int) -> list[dict]:
    """One worker's reps of the timed operator; returns timing dicts."""
    w, rank = ctx.world_size, ctx.rank
    lo = round(rank * total_rows / w)
    hi = round((rank + 1) * total_rows / w)
    card = key_cardinality if key_cardinality is not None else max(total_rows, 1)
    total_start = time.perf_counter()
    left = generate_table_slice(total_rows, seed, lo, hi, key_cardinality=card)
    right = None
    if op in ("join", "union", "intersect", "difference"):
        right = generate_table_slice(total_rows, seed + 7777, lo, hi, key_cardinality=card)
    op_fn = _bench_op_fn(op)

    records = []
    for rep in range(reps):
        ctx.barrier()
        t0 = time.perf_counter()
        result = op_fn(ctx, left, right)
        op_ms = (time.perf_counter() - t0) * 1000.0
        rec = TimingRecord(
            op=op,
            world_size=w,
            rank=rank,
            rows_in_left=left.num_rows,
            rows_in_right=right.num_rows if right is not None else 0,
            rows_out=result.num_rows,
            op_wall_clock_ms=op_ms,
            total_wall_clock_ms=(time.perf_counter() - total_start) * 1000.0,
        )
        d = dict(rec.__dict__)
        d["rep"] = rep
        records.append(d)
    return records


def _free_ports(n: int) -> list[int]:
    socks = []
    try:
        for _ in range(n):
            s = socket.socket()
            s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            s.bind(("127.0.0.1", 0))
            socks.append(s)
        return [s.getsockname()[1] for s in socks]
    finally:
        for s in socks:
            s.close()


def _run_world_tcp(cfg: BenchConfig, w: int, workdir: str) -> list[dict]:
    total = cfg.total_for(w)
    ports = _free_ports(w)
    hosts_path = os.path.join(workdir, f"hosts.w{w}")
    with open(hosts_path, "w", encoding="utf-8") as f:
        f.write("".join(f"127.0.0.1:{p}\n" for p in ports))

    procs = []
    timing_paths = []
    for rank in range(w):
        tpath = os.path.join(workdir, f"timing.w{w}.r{rank}.jsonl")
        timing_paths.append(tpath)
        argv = [
            sys.executable, "-m", "shardtable", "bench-rank",
            "--op", cfg.op,
            "--world-size", str(w),
            "--rank", str(rank),
            "--hosts-file", hosts_path,
            "--total-rows", str(total),
            "--seed", str(cfg.seed),
            "--reps", str(cfg.reps),
            "--timing-out", tpath,
            "--connect-timeout", str(cfg.connect_timeout),
            "--recv-timeout", str(cfg.recv_timeout),
        ]
        if cfg.key_cardinality is not None:
            argv += ["--key-cardinality", str(cfg.key_cardinality)]
        log = open(os.path.join(workdir, f"rank.w{w}.r{rank}.log"), "wb")
        procs.append((rank, subprocess.Popen(argv, stdout=log, stderr=log), log))

    deadline = time.monotonic() + cfg.connect_timeout + cfg.reps * cfg.recv_timeout
    failures = []
    for rank, proc, log in procs:
        budget = max(deadline - time.monotonic(), 1.0)
        try:
            code = proc.wait(timeout=budget)
        except subprocess.TimeoutExpired:
            proc.kill()
            code = proc.wait()
            failures.append((rank, "timeout"))
            continue
        finally:
            log.close()
        if code != 0:
            with open(log.name, "rb") as f:
                tail = f.read()[-2000:].decode("utf-8", "replace")
            failures.append((rank, f"exit {code}: {tail}"))
    if failures:
        for _, proc, _ in procs:
            if proc.poll() is None:
                proc.kill()
        rank, why = failures[0]
        raise RuntimeError(f"bench rank {rank} (world {w}) failed: {why}")

    records = []
    for tpath in timing_paths:
        with open(tpath, "r", encoding="utf-8") as f:
            records.extend(json.loads(line) for line in f if line.strip())
    return records


def _run_world_local(cfg: BenchConfig, w: int) -> list[dict]:
    total = cfg.total_for(w)
    per_rank = run_local_cluster(
        w,
        lambda ctx: bench_rank_worker(
            ctx, cfg.op, total, cfg.seed, cfg.key_cardinality, cfg.reps
        ),
        recv_timeout=cfg.recv_timeout,
    )
    return [rec for rank_records in per_rank for rec in rank_records]


def run_bench(cfg: BenchConfig) -> list[dict]:
    """Execute the sweep; returns one report row per world size and writes
    the report CSV when report_path is set."""
    cfg.validate()
    rows = []
    with tempfile.TemporaryDirectory(prefix="shardtable-bench-") as workdir:
        for w in cfg.workers:
            if cfg.transport == "tcp":
                records = _run_world_tcp(cfg, w, workdir)
            else:
                records = _run_world_local(cfg, w)
            by_rep: dict[int, list[dict]] = {}
            for rec in records:
                by_rep.setdefault(rec["rep"], []).append(rec)
            if sorted(by_rep) != list(range(cfg.reps)):
                raise RuntimeError(f"world {w}: incomplete timing records")
            rep_max = []
            rows_out_seen = set()
            for rep in range(cfg.reps):
                batch = by_rep[rep]
                if len(batch) != w:
                    raise RuntimeError(f"world {w} rep {rep}: {len(batch)} records for {w} ranks")
                rep_max.append(max(r["op_wall_clock_ms"] for r in batch))
                rows_out_seen.add(sum(r["rows_out"] for r in batch))
            if len(rows_out_seen) != 1:
                raise RuntimeError(
                    f"world {w}: rows_out differs across reps: {sorted(rows_out_seen)}"
                )
            rows.append(
                {
                    "world_size": w,
                    "median_ms": statistics.median(rep_max),
                    "rows_out": rows_out_seen.pop(),
                }
            )

    base = next((r for r in rows if r["world_size"] == 1), rows[0])
    for r in rows:
        r["speedup"] = base["median_ms"] / r["median_ms"] if r["median_ms"] > 0 else float("inf")

    if cfg.report_path:
        with open(cfg.report_path, "w", encoding="utf-8") as f:
            f.write(REPORT_COMMENT + "\n")
            f.write("world_size,median_ms,speedup,rows_out\n")
            for r in rows:
                f.write(
                    f"{r['world_size']},{r['median_ms']:.3f},{r['speedup']:.4f},{r['rows_out']}\n"
                )
    return rows
