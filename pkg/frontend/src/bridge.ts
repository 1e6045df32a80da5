/**
 * Low-level transport to the Python bridge process.
 *
 * Wire format both ways: u32 little-endian length prefix, then the payload.
 * A control payload is JSON; when its "blobs" field is n > 0, the next n
 * frames are raw bulk buffers belonging to the same message. Requests are
 * answered strictly in order.
 */

import { spawn, type ChildProcessByStdio } from "node:child_process";
import * as path from "node:path";
import type { Readable, Writable } from "node:stream";

export class BridgeError extends Error {
  constructor(message: string, readonly etype?: string) {
    super(message);
    this.name = "BridgeError";
  }
}

export interface Response {
  msg: Record<string, unknown>;
  blobs: Buffer[];
}

interface Pending {
  id: number;
  resolve: (r: Response) => void;
  reject: (e: Error) => void;
}

/** Counts every frame crossing the process boundary, for copy-discipline tests. */
export interface BridgeStats {
  framesSent: number;
  framesReceived: number;
  bytesSent: number;
  bytesReceived: number;
}

const SERVER = path.join(__dirname, "..", "..", "bridge_server.py");

export class Bridge {
  private proc: ChildProcessByStdio<Writable, Readable, null>;
  private buf: Buffer = Buffer.alloc(0);
  private pending: Pending[] = [];
  private head: Record<string, unknown> | null = null;
  private headBlobs: Buffer[] = [];
  private nextId = 1;
  private dead: Error | null = null;
  readonly stats: BridgeStats = {
    framesSent: 0, framesReceived: 0, bytesSent: 0, bytesReceived: 0,
  };

  constructor(pythonBin = "python3", serverPath = SERVER) {
    this.proc = spawn(pythonBin, [serverPath], {
      stdio: ["pipe", "pipe", "inherit"],
    });
    this.proc.stdout.on("data", (chunk: Buffer) => this.feed(chunk));
    this.proc.on("exit", (code) => {
      this.fail(new BridgeError(`bridge process exited with code ${code}`));
    });
    this.proc.on("error", (e) => this.fail(new BridgeError(String(e))));
  }

  private fail(err: Error): void {
    if (this.dead) return;
    this.dead = err;
    for (const p of this.pending.splice(0)) p.reject(err);
  }

  private feed(chunk: Buffer): void {
    this.buf = this.buf.length ? Buffer.concat([this.buf, chunk]) : chunk;
    for (;;) {
      if (this.buf.length < 4) return;
      const n = this.buf.readUInt32LE(0);
      if (this.buf.length < 4 + n) return;
      const frame = this.buf.subarray(4, 4 + n);
      this.buf = this.buf.subarray(4 + n);
      this.stats.framesReceived += 1;
      this.stats.bytesReceived += n;
      this.onFrame(frame);
    }
  }

  private onFrame(frame: Buffer): void {
    if (this.head === null) {
      const msg = JSON.parse(frame.toString()) as Record<string, unknown>;
      const want = (msg.blobs as number | undefined) ?? 0;
      if (want > 0 && msg.ok) {
        this.head = msg;
        this.headBlobs = [];
      } else {
        this.settle(msg, []);
      }
    } else {
      // a bulk frame belonging to the current head; copy out of the stream buffer
      this.headBlobs.push(Buffer.from(frame));
      if (this.headBlobs.length === (this.head.blobs as number)) {
        const msg = this.head;
        const blobs = this.headBlobs;
        this.head = null;
        this.headBlobs = [];
        this.settle(msg, blobs);
      }
    }
  }

  private settle(msg: Record<string, unknown>, blobs: Buffer[]): void {
    const p = this.pending.shift();
    if (!p) return; // late frame after shutdown
    if (p.id !== msg.id) {
      p.reject(new BridgeError(`response id ${msg.id} does not match request ${p.id}`));
      return;
    }
    if (msg.ok) {
      p.resolve({ msg, blobs });
    } else {
      p.reject(new BridgeError(String(msg.error), msg.etype as string));
    }
  }

  private writeFrame(payload: Buffer): void {
    const len = Buffer.allocUnsafe(4);
    len.writeUInt32LE(payload.length, 0);
    this.proc.stdin.write(len);
    this.proc.stdin.write(payload);
    this.stats.framesSent += 1;
    this.stats.bytesSent += payload.length;
  }

  request(cmd: string, args: Record<string, unknown> = {}, blobs: Buffer[] = []):
      Promise<Response> {
    if (this.dead) return Promise.reject(this.dead);
    const id = this.nextId++;
    const promise = new Promise<Response>((resolve, reject) => {
      this.pending.push({ id, resolve, reject });
    });
    this.writeFrame(Buffer.from(JSON.stringify({ id, cmd, args, blobs: blobs.length })));
    for (const b of blobs) this.writeFrame(b);
    return promise;
  }

  async close(): Promise<void> {
    if (!this.dead) {
      try {
        await this.request("shutdown");
      } catch {
        // already gone
      }
    }
    this.dead = this.dead ?? new BridgeError("bridge closed");
    this.proc.stdin.end();
    this.proc.kill();
  }
}
