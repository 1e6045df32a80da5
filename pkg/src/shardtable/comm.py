"""Worker contexts, transports, and the BSP collectives.

The engine's only network operator is a bulk-synchronous all-to-all table
exchange; gather is the collection primitive used for verification. Both
are built on a small Transport capability:

    send_frame(dest_rank, payload)  ordered, reliable, per (src, dest) pair
    recv_frame(src_rank) -> payload
    barrier()                       returns once all workers have entered
    close()

Two implementations: InProcess (worker-per-thread sharing queues in one
process) and Tcp (worker-per-process, full mesh over sockets). A worker
owns exactly one context; contexts are not thread-safe.

TCP wiring: rank r listens at its own address, dials every lower rank, and
accepts from every higher rank, which fixes the connect direction and
avoids simultaneous-open races. After connect the dialer sends a 16-byte
handshake: magic "CYHS", version u16, sender rank u32, world_size u32,
reserved u16, all little-endian. Data frames are u64 length-prefixed
TableFrame payloads; a zero-length frame is a barrier token, never data.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time
from typing import Callable, Sequence

from .frames import FrameError, deserialize_table, serialize_table
from .table import SchemaMismatchError, Table, concat

__all__ = [
    "CommError",
    "WorkerContext",
    "Transport",
    "InProcessTransport",
    "TcpTransport",
    "init_context",
    "init_local_cluster",
    "run_local_cluster",
    "parse_address",
    "all_to_all",
    "gather",
    "HANDSHAKE_MAGIC",
    "HANDSHAKE_VERSION",
]

HANDSHAKE_MAGIC = b"CYHS"
HANDSHAKE_VERSION = 1
_HANDSHAKE = struct.Struct("<4sHIIH")  # magic, version, rank, world_size, reserved
_LEN = struct.Struct("<Q")

DEFAULT_CONNECT_TIMEOUT = 30.0
DEFAULT_RECV_TIMEOUT = 300.0
MAX_FRAME_BYTES = 1 << 32


class CommError(RuntimeError):
    """Transport-level failure: timeouts, disconnects, protocol violations."""


class Transport:
    """Capability interface; see module docstring for the contract."""

    frames_sent: int = 0
    frames_received: int = 0

    def send_frame(self, dest_rank: int, payload: bytes) -> None:
        raise NotImplementedError

    def recv_frame(self, src_rank: int) -> bytes:
        raise NotImplementedError

    def barrier(self) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class WorkerContext:
    """One worker's identity plus its connected transport."""

    def __init__(self, rank: int, world_size: int, transport: Transport):
        if world_size < 1:
            raise ValueError("world_size must be >= 1")
        if not 0 <= rank < world_size:
            raise ValueError(f"rank {rank} outside [0, {world_size})")
        self.rank = rank
        self.world_size = world_size
        self.transport = transport

    @property
    def frames_sent(self) -> int:
        return self.transport.frames_sent

    def barrier(self) -> None:
        self.transport.barrier()

    def close(self) -> None:
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __repr__(self):
        return f"WorkerContext(rank={self.rank}, world_size={self.world_size})"


class _SelfLoopTransport(Transport):
    """Degenerate transport for world_size == 1; self-sends still work."""

    def __init__(self):
        self._q: queue.SimpleQueue = queue.SimpleQueue()
        self.frames_sent = 0
        self.frames_received = 0

    def send_frame(self, dest_rank: int, payload: bytes) -> None:
        if dest_rank != 0:
            raise CommError(f"world_size is 1, cannot send to rank {dest_rank}")
        self._q.put(bytes(payload))
        self.frames_sent += 1

    def recv_frame(self, src_rank: int) -> bytes:
        if src_rank != 0:
            raise CommError(f"world_size is 1, cannot receive from rank {src_rank}")
        try:
            payload = self._q.get_nowait()
        except queue.Empty:
            raise CommError("no self-addressed frame pending") from None
        self.frames_received += 1
        return payload

    def barrier(self) -> None:
        pass

    def close(self) -> None:
        pass


_ABORT = object()  # poison frame: wakes receivers when the cluster dies


class _InProcessGroup:
    """Shared state for one in-process cluster: queues and a real barrier."""

    def __init__(self, world_size: int, recv_timeout: float):
        self.world_size = world_size
        self.recv_timeout = recv_timeout
        self.aborted = False
        self.queues = {
            (s, d): queue.SimpleQueue()
            for s in range(world_size)
            for d in range(world_size)
        }
        self.barrier = threading.Barrier(world_size)

    def abort(self) -> None:
        """Fail every pending and future collective, promptly.

        A worker that dies mid-superstep leaves peers blocked in recv or in
        the barrier; both must wake with an error instead of running out
        their timeouts.
        """
        self.aborted = True
        self.barrier.abort()
        for q in self.queues.values():
            q.put(_ABORT)


class InProcessTransport(Transport):
    def __init__(self, group: _InProcessGroup, rank: int):
        self._group = group
        self._rank = rank
        self.frames_sent = 0
        self.frames_received = 0

    def send_frame(self, dest_rank: int, payload: bytes) -> None:
        if not 0 <= dest_rank < self._group.world_size:
            raise CommError(f"destination rank {dest_rank} out of range")
        if self._group.aborted:
            raise CommError(
                f"rank {self._rank}: cluster aborted, a peer worker failed"
            )
        self._group.queues[(self._rank, dest_rank)].put(bytes(payload))
        self.frames_sent += 1

    def recv_frame(self, src_rank: int) -> bytes:
        if not 0 <= src_rank < self._group.world_size:
            raise CommError(f"source rank {src_rank} out of range")
        q = self._group.queues[(src_rank, self._rank)]
        try:
            payload = q.get(timeout=self._group.recv_timeout)
        except queue.Empty:
            raise CommError(
                f"rank {self._rank}: timed out after {self._group.recv_timeout}s"
                f" waiting for a frame from rank {src_rank}"
            ) from None
        if payload is _ABORT:
            raise CommError(
                f"rank {self._rank}: cluster aborted, a peer worker failed"
            )
        self.frames_received += 1
        return payload

    def barrier(self) -> None:
        try:
            self._group.barrier.wait(timeout=self._group.recv_timeout)
        except threading.BrokenBarrierError:
            raise CommError(
                f"rank {self._rank}: barrier broken or timed out"
                f" (a peer worker likely failed)"
            ) from None

    def close(self) -> None:
        pass


def parse_address(text: str) -> tuple[str, int]:
    """Split `host:port`; the last colon separates, so bare IPv4/hostnames only."""
    host, sep, port_text = text.strip().rpartition(":")
    if not sep or not host:
        raise ValueError(f"malformed address {text!r}, expected host:port")
    try:
        port = int(port_text)
    except ValueError:
        raise ValueError(f"malformed port in address {text!r}") from None
    if not 0 < port < 65536:
        raise ValueError(f"port {port} out of range in {text!r}")
    return host, port


def _read_exact(sock: socket.socket, n: int, peer: str) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        try:
            chunk = sock.recv(min(remaining, 1 << 20))
        except OSError as e:
            raise CommError(f"socket error reading from {peer}: {e}") from None
        if not chunk:
            raise CommError(f"connection from {peer} closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


_READER_STOP = object()


class TcpTransport(Transport):
    """Full-mesh TCP among worker processes.

    One background reader thread per peer demultiplexes that peer's stream
    into a data queue and a barrier-token queue, so receives from distinct
    peers never block each other and the worker thread never touches a
    socket for reading.
    """

    def __init__(
        self,
        rank: int,
        world_size: int,
        addresses: Sequence[str],
        connect_timeout: float = DEFAULT_CONNECT_TIMEOUT,
        recv_timeout: float = DEFAULT_RECV_TIMEOUT,
    ):
        if len(addresses) != world_size:
            raise ValueError(
                f"{len(addresses)} peer addresses for world_size {world_size}"
            )
        self.rank = rank
        self.world_size = world_size
        self.recv_timeout = recv_timeout
        self.frames_sent = 0
        self.frames_received = 0
        self._closed = False
        self._send_locks: dict[int, threading.Lock] = {}
        self._socks: dict[int, socket.socket] = {}
        self._data_q: dict[int, queue.SimpleQueue] = {}
        self._token_q: dict[int, queue.SimpleQueue] = {}
        self._readers: list[threading.Thread] = []
        self._self_q: queue.SimpleQueue = queue.SimpleQueue()

        parsed = [parse_address(a) for a in addresses]
        host, port = parsed[rank]
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            listener.bind((host, port))
            listener.listen(world_size)
        except OSError as e:
            listener.close()
            raise CommError(f"rank {rank}: cannot listen at {host}:{port}: {e}") from None

        deadline = time.monotonic() + connect_timeout
        accepted: dict[int, socket.socket] = {}
        accept_error: list[BaseException] = []
        expected_inbound = world_size - rank - 1

        def accept_loop():
            try:
                while len(accepted) < expected_inbound:
                    budget = deadline - time.monotonic()
                    if budget <= 0:
                        raise CommError(
                            f"rank {rank}: timed out waiting for inbound peers;"
                            f" have {sorted(accepted)} of ranks"
                            f" {list(range(rank + 1, world_size))}"
                        )
                    listener.settimeout(min(budget, 1.0))
                    try:
                        conn, _ = listener.accept()
                    except socket.timeout:
                        continue
                    conn.settimeout(min(max(deadline - time.monotonic(), 0.1), 10.0))
                    raw = _read_exact(conn, _HANDSHAKE.size, "inbound peer")
                    magic, version, peer_rank, peer_world, _ = _HANDSHAKE.unpack(raw)
                    if magic != HANDSHAKE_MAGIC:
                        raise CommError(f"rank {rank}: bad handshake magic {magic!r}")
                    if version != HANDSHAKE_VERSION:
                        raise CommError(
                            f"rank {rank}: handshake version {version} unsupported"
                        )
                    if peer_world != world_size:
                        raise CommError(
                            f"rank {rank}: peer rank {peer_rank} reports world_size"
                            f" {peer_world}, expected {world_size}"
                        )
                    if not rank < peer_rank < world_size:
                        raise CommError(
                            f"rank {rank}: unexpected inbound rank {peer_rank}"
                        )
                    if peer_rank in accepted:
                        raise CommError(
                            f"rank {rank}: duplicate connection from rank {peer_rank}"
                        )
                    conn.settimeout(None)
                    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                    accepted[peer_rank] = conn
            except BaseException as e:  # surfaced after join
                accept_error.append(e)

        acceptor = threading.Thread(target=accept_loop, daemon=True, name=f"accept-r{rank}")
        acceptor.start()

        try:
            for peer in range(rank):
                self._socks[peer] = self._dial(parsed[peer], peer, deadline)
            acceptor.join(timeout=max(deadline - time.monotonic(), 0.1) + 2.0)
            if acceptor.is_alive():
                raise CommError(f"rank {rank}: accept loop did not finish in time")
            if accept_error:
                err = accept_error[0]
                raise err if isinstance(err, CommError) else CommError(str(err))
            self._socks.update(accepted)
        except BaseException:
            listener.close()
            for s in self._socks.values():
                s.close()
            for s in accepted.values():
                if s not in self._socks.values():
                    s.close()
            raise
        finally:
            self._listener = listener

        for peer, sock in self._socks.items():
            self._send_locks[peer] = threading.Lock()
            self._data_q[peer] = queue.SimpleQueue()
            self._token_q[peer] = queue.SimpleQueue()
            t = threading.Thread(
                target=self._reader_loop,
                args=(peer, sock),
                daemon=True,
                name=f"reader-r{rank}-from{peer}",
            )
            t.start()
            self._readers.append(t)

    def _dial(self, addr: tuple[str, int], peer: int, deadline: float) -> socket.socket:
        host, port = addr
        last_error: Exception | None = None
        while time.monotonic() < deadline:
            try:
                sock = socket.create_connection(
                    (host, port), timeout=max(min(deadline - time.monotonic(), 5.0), 0.1)
                )
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                sock.sendall(
                    _HANDSHAKE.pack(
                        HANDSHAKE_MAGIC, HANDSHAKE_VERSION, self.rank, self.world_size, 0
                    )
                )
                sock.settimeout(None)
                return sock
            except OSError as e:
                last_error = e
                time.sleep(0.05)
        raise CommError(
            f"rank {self.rank}: could not connect to rank {peer} at {host}:{port}"
            f" before the connect deadline: {last_error}"
        )

    def _reader_loop(self, peer: int, sock: socket.socket) -> None:
        try:
            while True:
                header = b""
                while len(header) < 8:
                    chunk = sock.recv(8 - len(header))
                    if not chunk:
                        raise ConnectionError("closed")
                    header += chunk
                (length,) = _LEN.unpack(header)
                if length > MAX_FRAME_BYTES:
                    raise CommError(
                        f"frame of {length} bytes from rank {peer} exceeds limit"
                    )
                if length == 0:
                    self._token_q[peer].put(b"")
                    continue
                self._data_q[peer].put(_read_exact(sock, length, f"rank {peer}"))
        except BaseException:
            self._data_q[peer].put(_READER_STOP)
            self._token_q[peer].put(_READER_STOP)

    def _send_raw(self, dest_rank: int, payload: bytes) -> None:
        if dest_rank == self.rank:
            self._self_q.put(bytes(payload))
            return
        sock = self._socks.get(dest_rank)
        if sock is None:
            raise CommError(f"rank {self.rank}: no connection to rank {dest_rank}")
        try:
            with self._send_locks[dest_rank]:
                sock.sendall(_LEN.pack(len(payload)) + payload)
        except OSError as e:
            raise CommError(
                f"rank {self.rank}: send to rank {dest_rank} failed: {e}"
            ) from None

    def send_frame(self, dest_rank: int, payload: bytes) -> None:
        if not 0 <= dest_rank < self.world_size:
            raise CommError(f"destination rank {dest_rank} out of range")
        self._send_raw(dest_rank, payload)
        self.frames_sent += 1

    def recv_frame(self, src_rank: int) -> bytes:
        if not 0 <= src_rank < self.world_size:
            raise CommError(f"source rank {src_rank} out of range")
        if src_rank == self.rank:
            try:
                payload = self._self_q.get_nowait()
            except queue.Empty:
                raise CommError("no self-addressed frame pending") from None
        else:
            try:
                payload = self._data_q[src_rank].get(timeout=self.recv_timeout)
            except queue.Empty:
                raise CommError(
                    f"rank {self.rank}: timed out after {self.recv_timeout}s waiting"
                    f" for a frame from rank {src_rank}"
                ) from None
            if payload is _READER_STOP:
                raise CommError(
                    f"rank {self.rank}: connection to rank {src_rank} was lost"
                )
        self.frames_received += 1
        return payload

    def barrier(self) -> None:
        # Zero-length frames are the barrier tokens; one to and from each peer.
        for peer in range(self.world_size):
            if peer != self.rank:
                self._send_raw(peer, b"")
        for peer in range(self.world_size):
            if peer == self.rank:
                continue
            try:
                token = self._token_q[peer].get(timeout=self.recv_timeout)
            except queue.Empty:
                raise CommError(
                    f"rank {self.rank}: barrier timed out waiting for rank {peer}"
                ) from None
            if token is _READER_STOP:
                raise CommError(
                    f"rank {self.rank}: barrier failed, connection to rank {peer} lost"
                )

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for sock in self._socks.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()
        self._listener.close()
        for t in self._readers:
            t.join(timeout=5.0)


# ---------------------------------------------------------------------------
# Context construction


def init_context(
    world_size: int,
    rank: int,
    transport_kind: str = "local",
    peer_addresses: Sequence[str] | None = None,
    connect_timeout: float = DEFAULT_CONNECT_TIMEOUT,
    recv_timeout: float = DEFAULT_RECV_TIMEOUT,
) -> WorkerContext:
    """Build and fully connect one worker's context.

    `tcp` connects a full mesh using `peer_addresses` (one host:port per
    rank) and passes a barrier before returning, so a successful return
    means the whole world is up. `local` here covers only world_size 1;
    an in-process multi-worker cluster shares state that per-worker calls
    cannot create, so use init_local_cluster for that.
    """
    if world_size < 1:
        raise ValueError("world_size must be >= 1")
    if world_size == 1:
        ctx = WorkerContext(0, 1, _SelfLoopTransport())
        ctx.barrier()
        return ctx
    if transport_kind == "tcp":
        if peer_addresses is None:
            raise ValueError("tcp transport requires peer_addresses")
        transport = TcpTransport(
            rank, world_size, list(peer_addresses), connect_timeout, recv_timeout
        )
        ctx = WorkerContext(rank, world_size, transport)
        ctx.barrier()
        return ctx
    if transport_kind in ("local", "inprocess"):
        raise ValueError(
            "a multi-worker in-process cluster must be created in one call;"
            " use init_local_cluster(world_size)"
        )
    raise ValueError(f"unknown transport_kind {transport_kind!r}")


def init_local_cluster(
    world_size: int, recv_timeout: float = DEFAULT_RECV_TIMEOUT
) -> list[WorkerContext]:
    """All world_size in-process contexts at once, sharing queues and barrier."""
    if world_size < 1:
        raise ValueError("world_size must be >= 1")
    if world_size == 1:
        return [init_context(1, 0)]
    group = _InProcessGroup(world_size, recv_timeout)
    return [
        WorkerContext(r, world_size, InProcessTransport(group, r))
        for r in range(world_size)
    ]


def run_local_cluster(
    world_size: int,
    worker_fn: Callable[[WorkerContext], object],
    recv_timeout: float = DEFAULT_RECV_TIMEOUT,
) -> list:
    """Run worker_fn on every rank of an in-process cluster; returns results.

    Workers run on daemon threads. The first worker exception is re-raised
    after all threads stop, so a failing collective cannot leave the caller
    hanging on a live barrier.
    """
    contexts = init_local_cluster(world_size, recv_timeout)
    results: list = [None] * world_size
    errors: list[tuple[int, BaseException]] = []

    def run(rank: int):
        try:
            results[rank] = worker_fn(contexts[rank])
        except BaseException as e:
            errors.append((rank, e))
            # A dead worker must not strand peers in recv or barrier.wait().
            if world_size > 1:
                contexts[rank].transport._group.abort()

    threads = [
        threading.Thread(target=run, args=(r,), daemon=True, name=f"worker-{r}")
        for r in range(world_size)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for ctx in contexts:
        ctx.close()
    if errors:
        # first chronological failure is the root cause; later ones are the
        # abort rippling through peers
        rank, err = errors[0]
        raise RuntimeError(f"worker rank {rank} failed: {err}") from err
    return results


# ---------------------------------------------------------------------------
# Collectives


def _check_received_schema(part: Table, expected: Table, src: int, rank: int) -> None:
    if not part.schema.same_types(expected.schema):
        raise SchemaMismatchError(
            f"rank {rank}: frame from rank {src} has schema {part.schema!r},"
            f" expected column types of {expected.schema!r}"
        )


def all_to_all(ctx: WorkerContext, outgoing: Sequence[Table]) -> Table:
    """BSP exchange: row block outgoing[d] goes to rank d; returns the
    concatenation of everything addressed to this rank, in ascending
    source-rank order. The self-addressed block is moved, not serialized.
    """
    outgoing = list(outgoing)
    if len(outgoing) != ctx.world_size:
        raise ValueError(
            f"outgoing has {len(outgoing)} entries for world_size {ctx.world_size}"
        )
    own = outgoing[ctx.rank]
    for i, t in enumerate(outgoing):
        if not t.schema.same_types(own.schema):
            raise SchemaMismatchError(
                f"outgoing[{i}] schema differs from outgoing[{ctx.rank}]"
            )
    if ctx.world_size == 1:
        return own

    for dest in range(ctx.world_size):
        if dest != ctx.rank:
            ctx.transport.send_frame(dest, serialize_table(outgoing[dest]))
    parts = []
    for src in range(ctx.world_size):
        if src == ctx.rank:
            parts.append(own)
            continue
        payload = ctx.transport.recv_frame(src)
        try:
            part = deserialize_table(payload)
        except FrameError as e:
            raise CommError(f"rank {ctx.rank}: bad frame from rank {src}: {e}") from None
        _check_received_schema(part, own, src, ctx.rank)
        parts.append(part)
    result = concat(parts)
    ctx.transport.barrier()
    return result


def gather(ctx: WorkerContext, table: Table, root: int = 0) -> Table | None:
    """Collect every worker's table at root (ascending rank order); others
    get None. Collective: all workers must call with the same root."""
    if not 0 <= root < ctx.world_size:
        raise ValueError(f"root {root} out of range")
    if ctx.world_size == 1:
        return table
    if ctx.rank == root:
        parts = []
        for src in range(ctx.world_size):
            if src == ctx.rank:
                parts.append(table)
                continue
            payload = ctx.transport.recv_frame(src)
            try:
                part = deserialize_table(payload)
            except FrameError as e:
                raise CommError(
                    f"rank {ctx.rank}: bad frame from rank {src}: {e}"
                ) from None
            _check_received_schema(part, table, src, ctx.rank)
            parts.append(part)
        result = concat(parts)
        ctx.transport.barrier()
        return result
    ctx.transport.send_frame(root, serialize_table(table))
    ctx.transport.barrier()
    return None
