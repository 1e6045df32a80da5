"""
Strong and weak scaling of the distributed join
===============================================

Strong scaling keeps the total problem size fixed and adds workers; weak
scaling grows the problem with the worker count. Timings here are small
so the script finishes quickly; raise the row counts for a real run.

Worker counts above the machine's core count measure overhead, not
speedup. Run on a 4+ core machine to see the curves mean something.
"""

import os

from shardtable.bench import BenchConfig, run_bench


def report(title, rows):
    print(f"\n{title}")
    print(f"{'workers':>8} {'median ms':>10} {'speedup':>8} {'rows out':>9}")
    for r in rows:
        print(f"{r['world_size']:>8} {r['median_ms']:>10.1f} "
              f"{r['speedup']:>7.2f}x {r['rows_out']:>9}")


cores = len(os.sched_getaffinity(0))
workers = [w for w in (1, 2, 4) if w <= max(cores, 1)] or [1]
print(f"machine exposes {cores} cores; testing worker counts {workers}")

# strong: same 200k total rows no matter how many workers share them
strong = run_bench(BenchConfig(
    mode="strong", op="join", workers=workers, reps=3,
    total_rows=200_000, key_cardinality=20_000, seed=11, transport="local",
))
report("strong scaling, 200k rows total", strong)

# weak: 50k rows per worker, so the ideal curve is flat
weak = run_bench(BenchConfig(
    mode="weak", op="join", workers=workers, reps=3,
    rows_per_worker=50_000, key_cardinality=10_000, seed=12, transport="local",
))
report("weak scaling, 50k rows per worker", weak)
