/**
 * Lifetime safety: ten thousand create/operate/release cycles must leave
 * no live handles behind and must not grow the server's memory beyond
 * allocator noise. A leak of even a few KB per cycle would trip the bound.
 */

import { test } from "node:test";
import assert from "node:assert/strict";

import { ShardClient } from "../src/index";

const CYCLES = 10_000;

test("10^4 create/operate/release cycles, stable memory", async () => {
  const client = await ShardClient.start();
  try {
    let baselineKb = -1;
    let peakKb = -1;
    for (let i = 0; i < CYCLES; i++) {
      const t = await client.generate({ rows: 256, seed: i, keyCardinality: 16 });
      const s = await t.select("key > 3");
      assert.ok(s.numRows <= 256);
      await s.release();
      await t.release();
      if (i === CYCLES / 10) {
        baselineKb = (await client.stats()).rssKb;
      } else if (i > CYCLES / 10 && i % 1000 === 0) {
        peakKb = Math.max(peakKb, (await client.stats()).rssKb);
      }
    }
    const final = await client.stats();
    assert.equal(final.liveHandles, 0);
    assert.ok(baselineKb > 0 && final.rssKb > 0, "rss readable");
    const growthKb = Math.max(peakKb, final.rssKb) - baselineKb;
    // two 256-row tables per cycle: leaking them would cost ~300 MB
    assert.ok(growthKb < 64 * 1024,
              `rss grew ${growthKb} KB over ${CYCLES} cycles past warmup`);
  } finally {
    await client.close();
  }
});
