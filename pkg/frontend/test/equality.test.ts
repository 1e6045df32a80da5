/**
 * Binding/native equivalence on a fixture corpus: every operator run through
 * the bridge must produce the same row multiset as the engine CLI on the
 * same inputs. Outputs are compared as canonically formatted CSV, sorted.
 */

import { test, before, after } from "node:test";
import assert from "node:assert/strict";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { BoundTable, ShardClient } from "../src/index";
import { runCli } from "../src/overhead";

let client: ShardClient;
let dir: string;
let leftCsv: string;
let rightCsv: string;
let left: BoundTable;
let right: BoundTable;

before(async () => {
  client = await ShardClient.start();
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "shardtable-eq-"));
  runCli(["generate", "--rows", "400", "--seed", "41", "--key-cardinality", "20",
          "--out-prefix", path.join(dir, "L")]);
  runCli(["generate", "--rows", "300", "--seed", "42", "--key-cardinality", "20",
          "--out-prefix", path.join(dir, "R")]);
  leftCsv = path.join(dir, "L.part0.csv");
  rightCsv = path.join(dir, "R.part0.csv");
  left = await client.readCsv(leftCsv);
  right = await client.readCsv(rightCsv);
});

after(async () => {
  await client.close();
});

function sortedDataLines(files: string[]): { header: string; lines: string[] } {
  let header = "";
  const lines: string[] = [];
  for (const f of files) {
    const rows = fs.readFileSync(f, "utf8").split("\n").filter((l) => l.length > 0);
    header = rows.shift() ?? "";
    lines.push(...rows);
  }
  lines.sort();
  return { header, lines };
}

async function compare(name: string, nativeArgs: string[], bound: BoundTable,
                       worldSize = 2): Promise<void> {
  const out = path.join(dir, `${name}.r{rank}.csv`);
  runCli(["run", ...nativeArgs, "--world-size", String(worldSize), "--out", out]);
  const parts = [];
  for (let r = 0; r < worldSize; r++) {
    parts.push(path.join(dir, `${name}.r${r}.csv`));
  }
  const native = sortedDataLines(parts);

  const boundCsv = path.join(dir, `${name}.bound.csv`);
  await bound.writeCsv(boundCsv);
  const mine = sortedDataLines([boundCsv]);

  assert.equal(mine.header, native.header, `${name}: header`);
  assert.equal(mine.lines.length, native.lines.length, `${name}: row count`);
  assert.deepEqual(mine.lines, native.lines, `${name}: row multiset`);
  await bound.release();
}

test("inner join matches a native 2-worker run", async () => {
  await compare("inner",
    ["--op", "join", "--left", leftCsv, "--right", rightCsv, "--join-type", "inner"],
    await left.join(right, { joinType: "inner" }));
});

test("full outer join matches, null padding included", async () => {
  await compare("fouter",
    ["--op", "join", "--left", leftCsv, "--right", rightCsv, "--join-type", "full_outer"],
    await left.join(right, { joinType: "full_outer" }));
});

test("sort-merge join agrees with the native hash join", async () => {
  await compare("sortj",
    ["--op", "join", "--left", leftCsv, "--right", rightCsv, "--join-type", "left"],
    await left.join(right, { joinType: "left", algorithm: "sort" }));
});

test("union matches", async () => {
  await compare("union",
    ["--op", "union", "--left", leftCsv, "--right", rightCsv],
    await left.union(right));
});

test("intersect matches", async () => {
  await compare("intersect",
    ["--op", "intersect", "--left", leftCsv, "--right", rightCsv],
    await left.intersect(right));
});

test("difference matches", async () => {
  await compare("difference",
    ["--op", "difference", "--left", leftCsv, "--right", rightCsv],
    await left.difference(right));
});

test("select matches", async () => {
  await compare("select",
    ["--op", "select", "--left", leftCsv, "--predicate", "d1 <= 0.5 and key > 3"],
    await left.select("d1 <= 0.5 and key > 3"));
});

test("project matches", async () => {
  await compare("project",
    ["--op", "project", "--left", leftCsv, "--columns", "2,0"],
    await left.project([2, 0]));
});
