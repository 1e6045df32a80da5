/**
 * Table handles over the bridge. A BoundTable is an opaque reference to a
 * table living in the Python process; only schema metadata is cached here.
 * Whole-table bytes cross the boundary on explicit export/import only.
 */

import { Bridge, BridgeError, type BridgeStats } from "./bridge";

export type DTypeName = "Int64" | "Float64" | "Utf8" | "Bool";

export interface FieldMeta {
  name: string;
  dtype: DTypeName;
}

export type JoinTypeName = "inner" | "left" | "right" | "full_outer";

export interface JoinOptions {
  joinType?: JoinTypeName;
  algorithm?: "hash" | "sort";
  leftKeys?: number[];
  rightKeys?: number[];
}

export interface CsvOptions {
  dtypes?: DTypeName[];
  hasHeader?: boolean;
  delimiter?: string;
  nullToken?: string;
}

/** One exported column: a validity byte per row plus one bulk values buffer. */
export type ColumnData =
  | { name: string; dtype: "Int64"; validity: Uint8Array; values: BigInt64Array }
  | { name: string; dtype: "Float64"; validity: Uint8Array; values: Float64Array }
  | { name: string; dtype: "Bool"; validity: Uint8Array; values: Uint8Array }
  | { name: string; dtype: "Utf8"; validity: Uint8Array; values: (string | null)[] };

export type CellValue = number | bigint | string | boolean | null;

interface RegisterMsg {
  handle: number;
  num_rows: number;
  schema: FieldMeta[];
}

function aligned(buf: Buffer): ArrayBuffer {
  // typed-array views need alignment the stream buffer cannot promise
  const ab = new ArrayBuffer(buf.length);
  new Uint8Array(ab).set(buf);
  return ab;
}

export class BoundTable {
  private released = false;

  constructor(
    private readonly client: ShardClient,
    readonly handle: number,
    readonly schema: FieldMeta[],
    readonly numRows: number,
  ) {}

  private alive(): void {
    if (this.released) {
      throw new BridgeError(`operation on released table handle ${this.handle}`);
    }
  }

  private async op(cmd: string, args: Record<string, unknown>): Promise<BoundTable> {
    this.alive();
    const { msg } = await this.client.bridge.request(cmd, args);
    return this.client.wrap(msg as unknown as RegisterMsg);
  }

  join(right: BoundTable, opts: JoinOptions = {}): Promise<BoundTable> {
    right.alive();
    return this.op("join", {
      left: this.handle,
      right: right.handle,
      join_type: opts.joinType ?? "inner",
      algorithm: opts.algorithm ?? "hash",
      left_keys: opts.leftKeys ?? [0],
      right_keys: opts.rightKeys ?? [0],
    });
  }

  union(right: BoundTable): Promise<BoundTable> {
    right.alive();
    return this.op("union", { left: this.handle, right: right.handle });
  }

  intersect(right: BoundTable): Promise<BoundTable> {
    right.alive();
    return this.op("intersect", { left: this.handle, right: right.handle });
  }

  difference(right: BoundTable): Promise<BoundTable> {
    right.alive();
    return this.op("difference", { left: this.handle, right: right.handle });
  }

  /** Filter by an expression string, e.g. "d1 <= 0.5 and key > 3". */
  select(predicate: string): Promise<BoundTable> {
    return this.op("select", { handle: this.handle, predicate });
  }

  project(columns: number[]): Promise<BoundTable> {
    return this.op("project", { handle: this.handle, columns });
  }

  async writeCsv(path: string): Promise<void> {
    this.alive();
    await this.client.bridge.request("write_csv", { handle: this.handle, path });
  }

  /** Serialize to the engine's binary table-frame format. */
  async toFrame(): Promise<Buffer> {
    this.alive();
    const { blobs } = await this.client.bridge.request("to_frame", { handle: this.handle });
    return blobs[0];
  }

  /** One row as plain values; NaN and infinities come back as strings. */
  async row(index: number): Promise<CellValue[]> {
    this.alive();
    const { msg } = await this.client.bridge.request("row", { handle: this.handle, index });
    return msg.row as CellValue[];
  }

  /**
   * Bulk column export: per column, one validity buffer and one values
   * buffer cross the boundary, regardless of row count.
   */
  async toColumns(): Promise<ColumnData[]> {
    this.alive();
    const { msg, blobs } = await this.client.bridge.request("to_columns", {
      handle: this.handle,
    });
    const meta = msg.columns as { name: string; dtype: DTypeName }[];
    const out: ColumnData[] = [];
    meta.forEach((m, i) => {
      const validity = new Uint8Array(aligned(blobs[2 * i]));
      const data = blobs[2 * i + 1];
      switch (m.dtype) {
        case "Int64":
          out.push({ name: m.name, dtype: "Int64", validity,
                     values: new BigInt64Array(aligned(data)) });
          break;
        case "Float64":
          out.push({ name: m.name, dtype: "Float64", validity,
                     values: new Float64Array(aligned(data)) });
          break;
        case "Bool":
          out.push({ name: m.name, dtype: "Bool", validity,
                     values: new Uint8Array(aligned(data)) });
          break;
        case "Utf8": {
          const raw = JSON.parse(data.toString()) as string[];
          const values = raw.map((s, j) => (validity[j] ? s : null));
          out.push({ name: m.name, dtype: "Utf8", validity, values });
          break;
        }
      }
    });
    return out;
  }

  /** Free the table on the Python side. Further use of this handle throws. */
  async release(): Promise<void> {
    this.alive();
    this.released = true;
    await this.client.bridge.request("release", { handle: this.handle });
  }
}

export interface ServerStats {
  liveHandles: number;
  rssKb: number;
  requests: number;
  transport: BridgeStats;
}

export class ShardClient {
  readonly bridge: Bridge;

  private constructor(bridge: Bridge) {
    this.bridge = bridge;
  }

  /** Spawn the Python side and wait until it answers. */
  static async start(pythonBin = "python3"): Promise<ShardClient> {
    const client = new ShardClient(new Bridge(pythonBin));
    await client.bridge.request("ping");
    return client;
  }

  wrap(msg: RegisterMsg): BoundTable {
    return new BoundTable(this, msg.handle, msg.schema, msg.num_rows);
  }

  private async make(cmd: string, args: Record<string, unknown>,
                     blobs: Buffer[] = []): Promise<BoundTable> {
    const { msg } = await this.bridge.request(cmd, args, blobs);
    return this.wrap(msg as unknown as RegisterMsg);
  }

  readCsv(path: string, opts: CsvOptions = {}): Promise<BoundTable> {
    const args: Record<string, unknown> = { path };
    if (opts.dtypes) args.dtypes = opts.dtypes;
    if (opts.hasHeader !== undefined) args.has_header = opts.hasHeader;
    if (opts.delimiter !== undefined) args.delimiter = opts.delimiter;
    if (opts.nullToken !== undefined) args.null_token = opts.nullToken;
    return this.make("read_csv", args);
  }

  /** Deterministic seeded table, same generator the CLI uses. */
  generate(opts: { rows: number; seed: number; keyCardinality?: number;
                   dtypes?: DTypeName[] }): Promise<BoundTable> {
    return this.make("generate", {
      rows: opts.rows,
      seed: opts.seed,
      key_cardinality: opts.keyCardinality ?? null,
      dtypes: opts.dtypes ?? null,
    });
  }

  /** Build a small table from JSON-safe values; null marks a null cell. */
  fromRows(schema: FieldMeta[], rows: CellValue[][]): Promise<BoundTable> {
    return this.make("from_rows", { schema, rows });
  }

  fromFrame(frame: Buffer): Promise<BoundTable> {
    return this.make("from_frame", {}, [frame]);
  }

  async stats(): Promise<ServerStats> {
    const { msg } = await this.bridge.request("stats");
    return {
      liveHandles: msg.live_handles as number,
      rssKb: msg.rss_kb as number,
      requests: msg.requests as number,
      transport: { ...this.bridge.stats },
    };
  }

  close(): Promise<void> {
    return this.bridge.close();
  }
}
