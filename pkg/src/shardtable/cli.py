"""Command-line harness: generate | run | bench | verify.

generate  writes deterministic CSV part files for experiments
run       executes one distributed operator end to end (load, op, write)
bench     weak/strong scaling sweep, report CSV ready for log-log plots
verify    recomputes a finished run serially via the reference
          implementations and compares row count and row multiset

Exit codes: 0 success, 2 usage error, 1 runtime failure or verify mismatch.
"""

from __future__ import annotations

import argparse
import sys
from collections import Counter

from . import oracle
from .bench import BenchConfig, bench_rank_worker, run_bench
from .comm import init_context
from .ops import JoinAlgorithm, JoinType
from .predicate import parse_predicate
from .runner import RunConfig, run_local, run_tcp_rank
from .table import DType, concat
from .tableio import CsvReadOptions, generate_table, read_csv_many, write_csv

_JOIN_TYPES = {t.value: t for t in JoinType}
_ALGORITHMS = {a.value: a for a in JoinAlgorithm}
_DTYPES = {d.name.lower(): d for d in DType}


def _parse_indices(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _parse_workers(text: str) -> list[int]:
    try:
        out = [int(p) for p in text.split(",") if p != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not out:
        raise argparse.ArgumentTypeError("empty worker list")
    return out


def _parse_schema(text: str):
    dtypes = []
    for part in text.split(","):
        key = part.strip().lower()
        if key not in _DTYPES:
            raise argparse.ArgumentTypeError(
                f"unknown dtype {part!r}; choose from {sorted(d.name for d in DType)}"
            )
        dtypes.append(_DTYPES[key])
    return dtypes


def _add_csv_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delimiter", default=",", help="field delimiter (default ',')")
    p.add_argument("--no-header", action="store_true", help="inputs have no header row")
    p.add_argument("--null-token", default="", help="unquoted field text meaning null")


def _csv_opts(args) -> CsvReadOptions:
    return CsvReadOptions(
        delimiter=args.delimiter,
        has_header=not args.no_header,
        null_token=args.null_token,
    )


def _add_op_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--op", required=True,
                   choices=["join", "union", "intersect", "difference", "select", "project"])
    p.add_argument("--left", action="append", required=True, metavar="CSV",
                   help="left input; repeat for one file per worker")
    p.add_argument("--right", action="append", metavar="CSV",
                   help="right input for join/union/intersect/difference")
    p.add_argument("--join-type", default="inner", choices=sorted(_JOIN_TYPES))
    p.add_argument("--algorithm", default="hash", choices=sorted(_ALGORITHMS))
    p.add_argument("--left-keys", type=_parse_indices, default=(0,),
                   help="comma-separated key column indices (default 0)")
    p.add_argument("--right-keys", type=_parse_indices, default=(0,))
    p.add_argument("--predicate", help="filter expression for select, e.g. \"#0 > 10\"")
    p.add_argument("--columns", type=_parse_indices, help="column indices for project")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shardtable",
        description="distributed columnar table engine harness",
    )
    sub = parser.add_subparsers(
        dest="command", required=True, metavar="{generate,run,bench,verify}"
    )

    g = sub.add_parser("generate", help="write deterministic CSV part files")
    g.add_argument("--rows", type=int, required=True, help="total rows across all parts")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--key-cardinality", type=int, default=None,
                   help="Int64 keys drawn from [0, C); default: total rows")
    g.add_argument("--out-prefix", required=True)
    g.add_argument("--parts", type=int, default=1)
    g.add_argument("--schema", type=_parse_schema, default=None,
                   help="comma-separated dtypes; default Int64 + 3 Float64")
    g.add_argument("--delimiter", default=",")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="execute one distributed operator end to end")
    _add_op_flags(r)
    r.add_argument("--world-size", type=int, default=1)
    r.add_argument("--transport", default="local", choices=["local", "tcp"])
    r.add_argument("--rank", type=int, help="this worker's rank (tcp)")
    r.add_argument("--hosts-file", help="host:port per line, line number = rank (tcp)")
    r.add_argument("--out", help="output CSV path template with {rank}")
    r.add_argument("--timing", help="timing JSON-lines path (may contain {rank})")
    r.add_argument("--connect-timeout", type=float, default=30.0)
    r.add_argument("--recv-timeout", type=float, default=300.0)
    _add_csv_flags(r)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="weak/strong scaling sweep")
    b.add_argument("--mode", required=True, choices=["weak", "strong"])
    b.add_argument("--op", default="join",
                   choices=["join", "union", "intersect", "difference", "select", "project"])
    b.add_argument("--workers", type=_parse_workers, default=[1, 2, 4],
                   help="comma-separated world sizes (default 1,2,4)")
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--rows-per-worker", type=int, default=100_000,
                   help="weak mode rows per worker per relation")
    b.add_argument("--total-rows", type=int, default=2_000_000,
                   help="strong mode total rows per relation")
    b.add_argument("--key-cardinality", type=int, default=None)
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--transport", default="tcp", choices=["tcp", "local"],
                   help="tcp spawns one process per rank (default); local is thread-hosted")
    b.add_argument("--report", help="report CSV path (default: print to stdout)")
    b.add_argument("--connect-timeout", type=float, default=30.0)
    b.add_argument("--recv-timeout", type=float, default=300.0)
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="check a run's outputs against a serial recompute")
    _add_op_flags(v)
    v.add_argument("--out", required=True, help="output CSV path template with {rank}")
    v.add_argument("--world-size", type=int, default=1)
    _add_csv_flags(v)
    v.set_defaults(func=cmd_verify)

    br = sub.add_parser("bench-rank")  # internal: one rank of a tcp bench world
    br.add_argument("--op", required=True)
    br.add_argument("--world-size", type=int, required=True)
    br.add_argument("--rank", type=int, required=True)
    br.add_argument("--hosts-file", required=True)
    br.add_argument("--total-rows", type=int, required=True)
    br.add_argument("--seed", type=int, required=True)
    br.add_argument("--key-cardinality", type=int, default=None)
    br.add_argument("--reps", type=int, required=True)
    br.add_argument("--timing-out", required=True)
    br.add_argument("--connect-timeout", type=float, default=30.0)
    br.add_argument("--recv-timeout", type=float, default=300.0)
    br.set_defaults(func=cmd_bench_rank)
    return parser


def cmd_generate(args) -> int:
    schema = None
    if args.schema is not None:
        from .table import Field, Schema
        schema = Schema([Field(f"c{i}", d) for i, d in enumerate(args.schema)])
    card = args.key_cardinality if args.key_cardinality is not None else max(args.rows, 1)
    base, extra = divmod(args.rows, args.parts)
    for part in range(args.parts):
        n = base + (1 if part < extra else 0)
        t = generate_table(n, args.seed + part, schema, key_cardinality=card)
        path = f"{args.out_prefix}.part{part}.csv"
        write_csv(t, path, delimiter=args.delimiter)
        print(f"{path}: {n} rows")
    return 0


def _run_config(args) -> RunConfig:
    return RunConfig(
        op=args.op,
        left_inputs=list(args.left),
        right_inputs=list(args.right) if args.right else None,
        world_size=args.world_size,
        transport=args.transport,
        rank=args.rank,
        hosts_file=args.hosts_file,
        output_template=args.out,
        timing_path=args.timing,
        join_type=_JOIN_TYPES[args.join_type],
        join_algorithm=_ALGORITHMS[args.algorithm],
        left_keys=args.left_keys,
        right_keys=args.right_keys,
        predicate=args.predicate,
        columns=list(args.columns) if args.columns else None,
        csv=_csv_opts(args),
        connect_timeout=args.connect_timeout,
        recv_timeout=args.recv_timeout,
    )


def cmd_run(args) -> int:
    cfg = _run_config(args)
    if cfg.transport == "local":
        records = run_local(cfg)
    else:
        records = [run_tcp_rank(cfg)]
    for rec in records:
        print(
            f"rank {rec.rank}/{rec.world_size}: {rec.op} "
            f"in={rec.rows_in_left}+{rec.rows_in_right} out={rec.rows_out} "
            f"op={rec.op_wall_clock_ms:.1f}ms total={rec.total_wall_clock_ms:.1f}ms"
        )
    return 0


def cmd_bench(args) -> int:
    cfg = BenchConfig(
        mode=args.mode,
        op=args.op,
        workers=args.workers,
        reps=args.reps,
        rows_per_worker=args.rows_per_worker,
        total_rows=args.total_rows,
        key_cardinality=args.key_cardinality,
        seed=args.seed,
        transport=args.transport,
        report_path=args.report,
        connect_timeout=args.connect_timeout,
        recv_timeout=args.recv_timeout,
    )
    rows = run_bench(cfg)
    if not args.report:
        from .bench import REPORT_COMMENT
        print(REPORT_COMMENT)
        print("world_size,median_ms,speedup,rows_out")
        for r in rows:
            print(f"{r['world_size']},{r['median_ms']:.3f},{r['speedup']:.4f},{r['rows_out']}")
    else:
        print(f"report written to {args.report}")
    return 0


def cmd_bench_rank(args) -> int:
    with open(args.hosts_file, "r", encoding="utf-8") as f:
        addresses = [line.strip() for line in f if line.strip()]
    ctx = init_context(
        args.world_size,
        args.rank,
        "tcp" if args.world_size > 1 else "local",
        addresses,
        connect_timeout=args.connect_timeout,
        recv_timeout=args.recv_timeout,
    )
    try:
        records = bench_rank_worker(
            ctx, args.op, args.total_rows, args.seed, args.key_cardinality, args.reps
        )
    finally:
        ctx.close()
    import json
    with open(args.timing_out, "w", encoding="utf-8") as f:
        f.write("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    return 0


# ---------------------------------------------------------------------------
# verify


def _oracle_rows(args, left, right) -> list[tuple]:
    """Serial recompute of the operation via the reference implementations."""
    if args.op == "join":
        if left.num_rows * right.num_rows <= 10_000_000:
            return oracle.nested_loop_join(
                left, right, list(args.left_keys), list(args.right_keys), args.join_type
            )
        return oracle.grouped_join(
            left, right, list(args.left_keys), list(args.right_keys), args.join_type
        )
    if args.op == "union":
        return oracle.set_union(left, right)
    if args.op == "intersect":
        return oracle.set_intersect(left, right)
    if args.op == "difference":
        return oracle.set_difference(left, right)
    if args.op == "select":
        pred = parse_predicate(args.predicate)
        names = [f.name for f in left.schema]
        return oracle.row_filter(left, lambda row: pred.evaluate_row(names, row))
    return oracle.column_pick(left, list(args.columns))


def _atom_to_value(atom):
    if atom == oracle.NULL_ATOM:
        return None
    tag, v = atom
    if tag == "f":
        import struct
        return struct.unpack("<d", struct.pack("<Q", v))[0]
    return v


def cmd_verify(args) -> int:
    opts = _csv_opts(args)
    left = concat(read_csv_many(list(args.left), opts))
    right = concat(read_csv_many(list(args.right), opts)) if args.right else None

    expected = _oracle_rows(args, left, right)
    expected_counter = Counter(expected)

    ltypes = [f.dtype for f in left.schema]
    if args.op == "join":
        out_types = ltypes + [f.dtype for f in right.schema]
    elif args.op == "project":
        out_types = [ltypes[c] for c in args.columns]
    else:
        out_types = ltypes
    out_opts = CsvReadOptions(
        delimiter=opts.delimiter, has_header=opts.has_header,
        null_token=opts.null_token, schema=out_types,
    )
    out_paths = [
        args.out.replace("{rank}", str(r)) for r in range(args.world_size)
    ]
    outputs = read_csv_many(out_paths, out_opts)
    actual_counter: Counter = Counter()
    actual_rows = 0
    for t in outputs:
        actual_rows += t.num_rows
        actual_counter.update(oracle.table_atoms(t))

    print(f"verify: op={args.op} expected_rows={len(expected)} actual_rows={actual_rows}")
    if args.op == "join" and args.join_type == "inner":
        lk = Counter(
            k for k in (oracle.row_atoms(left, i, list(args.left_keys))
                        for i in range(left.num_rows))
            if not any(a == oracle.NULL_ATOM for a in k)
        )
        rk = Counter(
            k for k in (oracle.row_atoms(right, j, list(args.right_keys))
                        for j in range(right.num_rows))
            if not any(a == oracle.NULL_ATOM for a in k)
        )
        identity = sum(c * rk.get(k, 0) for k, c in lk.items())
        print(f"verify: inner-join count identity sum(count_L*count_R) = {identity}")
        if identity != len(expected):
            print("verify: FAIL count identity disagrees with oracle recompute")
            return 1

    if actual_rows != len(expected):
        print(f"verify: FAIL row count mismatch ({actual_rows} != {len(expected)})")
    if actual_counter == expected_counter:
        print("verify: OK counts and row multisets match")
        return 0

    only_actual = actual_counter - expected_counter
    only_expected = expected_counter - actual_counter
    diff = sorted(
        set(only_actual) | set(only_expected), key=oracle.sorted_atoms_key
    )
    first = diff[0]
    where = "output" if first in only_actual else "recompute"
    print(
        f"verify: FAIL multiset mismatch; {sum(only_actual.values())} rows only in"
        f" output, {sum(only_expected.values())} only in recompute"
    )
    print(f"verify: first differing row (in {where} only): "
          f"{tuple(_atom_to_value(a) for a in first)}")
    return 1


def _usage_error(args) -> str | None:
    """Op-dependent flag requirements argparse cannot express on its own."""
    if args.command in ("run", "verify"):
        if args.op in ("join", "union", "intersect", "difference") and not args.right:
            return f"--op {args.op} requires --right"
        if args.op == "select" and not args.predicate:
            return "--op select requires --predicate"
        if args.op == "project" and not args.columns:
            return "--op project requires --columns"
    if args.command == "run" and args.transport == "tcp":
        if args.rank is None or not args.hosts_file:
            return "--transport tcp requires --rank and --hosts-file"
    if args.command == "generate":
        if args.rows < 0:
            return "--rows must be >= 0"
        if args.parts < 1:
            return "--parts must be >= 1"
    return None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    problem = _usage_error(args)
    if problem:
        parser.error(problem)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
