"""Stdio bridge: serves the shardtable library to a foreign-language client.

Protocol, both directions: a 4-byte little-endian length prefix, then the
payload. Control payloads are JSON; bulk payloads (table frames, column
buffers) are raw bytes announced by a "blobs" count in the preceding JSON
message. Requests are handled strictly in order, one at a time.

Tables live on this side of the boundary. The client holds integer handles
and the schema; whole-table bytes cross only on explicit export/import.
Nothing here may print to stdout except the framing code.
"""

import json
import struct
import sys
import traceback

import numpy as np

from shardtable import (
    CsvReadOptions,
    DType,
    Field,
    JoinAlgorithm,
    JoinConfig,
    JoinType,
    Schema,
    Table,
    deserialize_table,
    difference_distinct,
    generate_table,
    intersect_distinct,
    join,
    project,
    read_csv,
    select,
    serialize_table,
    union_distinct,
    write_csv,
)

_IN = sys.stdin.buffer
_OUT = sys.stdout.buffer


def _read_exact(n: int) -> bytes:
    chunks = []
    while n > 0:
        chunk = _IN.read(n)
        if not chunk:
            raise EOFError("client closed the pipe")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame() -> bytes:
    (n,) = struct.unpack("<I", _read_exact(4))
    return _read_exact(n)


def write_frame(payload: bytes) -> None:
    _OUT.write(struct.pack("<I", len(payload)) + payload)


def _json_value(v):
    # JSON has no NaN/Infinity; spell the three specials out as strings
    if isinstance(v, float):
        if v != v:
            return "NaN"
        if v == float("inf"):
            return "Infinity"
        if v == float("-inf"):
            return "-Infinity"
    return v


class Server:
    def __init__(self):
        self.tables: dict[int, Table] = {}
        self.next_handle = 1
        self.requests = 0

    def register(self, t: Table) -> dict:
        h = self.next_handle
        self.next_handle += 1
        self.tables[h] = t
        return {
            "handle": h,
            "num_rows": t.num_rows,
            "schema": [{"name": f.name, "dtype": f.dtype.name} for f in t.schema],
        }

    def table(self, args, key="handle") -> Table:
        h = args[key]
        if h not in self.tables:
            raise ValueError(f"released or unknown table handle {h}")
        return self.tables[h]

    # one method per command; each returns (result_dict, [blobs])

    def cmd_ping(self, args, blobs):
        return {}, []

    def cmd_read_csv(self, args, blobs):
        kw = {}
        if args.get("dtypes"):
            kw["schema"] = [DType[d] for d in args["dtypes"]]
        for name in ("delimiter", "has_header", "null_token"):
            if name in args:
                kw[name] = args[name]
        t = read_csv(args["path"], CsvReadOptions(**kw))
        return self.register(t), []

    def cmd_write_csv(self, args, blobs):
        write_csv(self.table(args), args["path"])
        return {}, []

    def cmd_generate(self, args, blobs):
        schema = None
        if args.get("dtypes"):
            schema = Schema([
                Field(f"c{i}", DType[d]) for i, d in enumerate(args["dtypes"])
            ])
        t = generate_table(args["rows"], args["seed"], schema=schema,
                           key_cardinality=args.get("key_cardinality"))
        return self.register(t), []

    def cmd_from_rows(self, args, blobs):
        schema = Schema([
            Field(c["name"], DType[c["dtype"]]) for c in args["schema"]
        ])
        t = Table.from_rows(schema, [tuple(r) for r in args["rows"]])
        return self.register(t), []

    def cmd_to_frame(self, args, blobs):
        return {"blobs": 1}, [serialize_table(self.table(args))]

    def cmd_from_frame(self, args, blobs):
        return self.register(deserialize_table(blobs[0])), []

    def cmd_to_columns(self, args, blobs):
        """Bulk export: per column one validity buffer plus one data buffer."""
        t = self.table(args)
        out = []
        meta = []
        for f, col in zip(t.schema, t.columns):
            validity = np.ascontiguousarray(col.validity, dtype=np.uint8)
            if f.dtype is DType.Utf8:
                strings = []
                offs = col.offsets
                for i in range(col.length):
                    if col.validity[i]:
                        strings.append(col.data[offs[i]:offs[i + 1]].decode())
                    else:
                        strings.append("")
                data = json.dumps(strings).encode()
            else:
                data = np.ascontiguousarray(col.values).tobytes()
            meta.append({"name": f.name, "dtype": f.dtype.name,
                         "num_rows": col.length, "data_len": len(data)})
            out += [validity.tobytes(), data]
        return {"columns": meta, "blobs": len(out)}, out

    def cmd_join(self, args, blobs):
        cfg = JoinConfig(
            JoinType(args.get("join_type", "inner")),
            JoinAlgorithm(args.get("algorithm", "hash")),
            args.get("left_keys", [0]),
            args.get("right_keys", [0]),
        )
        t = join(self.table(args, "left"), self.table(args, "right"), cfg)
        return self.register(t), []

    def cmd_union(self, args, blobs):
        return self.register(
            union_distinct(self.table(args, "left"), self.table(args, "right"))), []

    def cmd_intersect(self, args, blobs):
        return self.register(
            intersect_distinct(self.table(args, "left"), self.table(args, "right"))), []

    def cmd_difference(self, args, blobs):
        return self.register(
            difference_distinct(self.table(args, "left"), self.table(args, "right"))), []

    def cmd_select(self, args, blobs):
        return self.register(select(self.table(args), args["predicate"])), []

    def cmd_project(self, args, blobs):
        return self.register(project(self.table(args), args["columns"])), []

    def cmd_row(self, args, blobs):
        t = self.table(args)
        i = args["index"]
        if not 0 <= i < t.num_rows:
            raise ValueError(f"row index {i} out of range for {t.num_rows} rows")
        return {"row": [_json_value(v) for v in t.row(i)]}, []

    def cmd_num_rows(self, args, blobs):
        return {"num_rows": self.table(args).num_rows}, []

    def cmd_schema(self, args, blobs):
        t = self.table(args)
        return {"schema": [{"name": f.name, "dtype": f.dtype.name}
                           for f in t.schema]}, []

    def cmd_release(self, args, blobs):
        h = args["handle"]
        if h not in self.tables:
            raise ValueError(f"released or unknown table handle {h}")
        del self.tables[h]
        return {}, []

    def cmd_stats(self, args, blobs):
        rss_kb = -1
        try:
            with open("/proc/self/status") as f:
                for line in f:
                    if line.startswith("VmRSS:"):
                        rss_kb = int(line.split()[1])
                        break
        except OSError:
            pass
        return {"live_handles": len(self.tables), "rss_kb": rss_kb,
                "requests": self.requests}, []

    def serve(self) -> None:
        while True:
            try:
                req = json.loads(read_frame())
            except EOFError:
                return
            blobs = [read_frame() for _ in range(req.get("blobs", 0))]
            self.requests += 1
            if req["cmd"] == "shutdown":
                write_frame(json.dumps({"id": req["id"], "ok": True}).encode())
                _OUT.flush()
                return
            try:
                handler = getattr(self, "cmd_" + req["cmd"], None)
                if handler is None:
                    raise ValueError(f"unknown command {req['cmd']!r}")
                result, out_blobs = handler(req.get("args", {}), blobs)
                result.update(id=req["id"], ok=True)
                write_frame(json.dumps(result).encode())
                for blob in out_blobs:
                    write_frame(blob)
            except Exception as e:
                err = {"id": req["id"], "ok": False,
                       "error": str(e), "etype": type(e).__name__}
                write_frame(json.dumps(err).encode())
                traceback.print_exc(file=sys.stderr)
            _OUT.flush()


if __name__ == "__main__":
    Server().serve()
