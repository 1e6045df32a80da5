/**
 * Binding-overhead microbenchmark: run the same inner join natively through
 * the engine CLI (local transport, one worker) and through the bridge, on
 * identical seeded inputs, and report both medians.
 */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";
import * as os from "node:os";

import { ShardClient } from "./client";

export interface OverheadReport {
  rows: number;
  reps: number;
  native_ms: number;
  bound_ms: number;
  /** (bound - native) / native * 100; negative means the binding was faster. */
  overhead_pct: number;
  rows_out_native: number;
  rows_out_bound: number;
}

export function runCli(args: string[], check = true): { status: number; stdout: string; stderr: string } {
  const r = spawnSync("python3", ["-m", "shardtable", ...args], {
    encoding: "utf8",
    maxBuffer: 1 << 28,
  });
  if (check && r.status !== 0) {
    throw new Error(`shardtable ${args[0]} failed (${r.status}): ${r.stderr}`);
  }
  return { status: r.status ?? -1, stdout: r.stdout, stderr: r.stderr };
}

function median(xs: number[]): number {
  const s = [...xs].sort((a, b) => a - b);
  const mid = s.length >> 1;
  return s.length % 2 ? s[mid] : (s[mid - 1] + s[mid]) / 2;
}

export async function overheadBench(opts: {
  rows?: number;
  reps?: number;
  keyCardinality?: number;
  workdir?: string;
} = {}): Promise<OverheadReport> {
  const rows = opts.rows ?? 1_000_000;
  const reps = opts.reps ?? 3;
  const card = opts.keyCardinality ?? rows;
  const dir = opts.workdir ?? fs.mkdtempSync(path.join(os.tmpdir(), "shardtable-ovh-"));

  const left = path.join(dir, "L");
  const right = path.join(dir, "R");
  runCli(["generate", "--rows", String(rows), "--seed", "101",
          "--key-cardinality", String(card), "--out-prefix", left]);
  runCli(["generate", "--rows", String(rows), "--seed", "102",
          "--key-cardinality", String(card), "--out-prefix", right]);
  const leftCsv = `${left}.part0.csv`;
  const rightCsv = `${right}.part0.csv`;

  // native: one-worker local run; the timing record isolates operator time
  // from CSV parsing, which is what the binding path never pays either
  const nativeMs: number[] = [];
  let rowsOutNative = -1;
  for (let rep = 0; rep < reps; rep++) {
    const timing = path.join(dir, `native-${rep}.jsonl`);
    runCli(["run", "--op", "join", "--left", leftCsv, "--right", rightCsv,
            "--world-size", "1", "--out", path.join(dir, `native-${rep}.r{rank}.csv`),
            "--timing", timing]);
    const record = JSON.parse(fs.readFileSync(timing, "utf8").trim().split("\n")[0]);
    nativeMs.push(record.op_wall_clock_ms as number);
    rowsOutNative = record.rows_out as number;
  }

  // bound: tables loaded ahead of time, then the join call is timed with
  // its full boundary round trip included
  const client = await ShardClient.start();
  let boundMs: number[] = [];
  let rowsOutBound = -1;
  try {
    const lt = await client.readCsv(leftCsv);
    const rt = await client.readCsv(rightCsv);
    for (let rep = 0; rep < reps; rep++) {
      const t0 = process.hrtime.bigint();
      const joined = await lt.join(rt, { joinType: "inner" });
      const t1 = process.hrtime.bigint();
      boundMs.push(Number(t1 - t0) / 1e6);
      rowsOutBound = joined.numRows;
      await joined.release();
    }
  } finally {
    await client.close();
  }

  const native = median(nativeMs);
  const bound = median(boundMs);
  return {
    rows,
    reps,
    native_ms: native,
    bound_ms: bound,
    overhead_pct: ((bound - native) / native) * 100,
    rows_out_native: rowsOutNative,
    rows_out_bound: rowsOutBound,
  };
}
