/**
 * The binding-overhead acceptance run: a million-row inner join through the
 * bridge must cost within 10% of the native operator. Both sides run on
 * identical generated inputs; row counts must agree exactly.
 *
 * SHARDTABLE_BENCH_ROWS overrides the size for quick local runs.
 */

import { test } from "node:test";
import assert from "node:assert/strict";

import { overheadBench } from "../src/index";

const ROWS = Number(process.env.SHARDTABLE_BENCH_ROWS ?? 1_000_000);

test("binding overhead on a million-row inner join is within 10%", async () => {
  const report = await overheadBench({ rows: ROWS, reps: 3 });
  console.log(
    `overhead report: rows=${report.rows} native=${report.native_ms.toFixed(1)}ms ` +
    `bound=${report.bound_ms.toFixed(1)}ms overhead=${report.overhead_pct.toFixed(2)}%`,
  );
  assert.equal(report.rows_out_bound, report.rows_out_native);
  assert.ok(report.rows_out_native > 0);
  assert.ok(
    report.overhead_pct <= 10,
    `binding overhead ${report.overhead_pct.toFixed(2)}% exceeds 10%`,
  );
});
