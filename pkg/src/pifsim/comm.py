"""In-process SPMD message passing with deterministic collectives.

One worker thread per rank, a FIFO mailbox per ordered rank pair, and a
fixed binary-tree reduction order so repeated runs are bit-identical.
Every blocking wait is bounded by a deadlock watchdog.  The surface mirrors
what an MPI-backed implementation would provide (split, allreduce, P2P,
alltoall), so nothing here precludes swapping the transport later.

Payloads are serialized to tagged byte sequences on send and rebuilt on
receive, so ownership always passes to the receiver and the logged byte
counts are the real wire sizes (complex values counted as re/im pairs).
"""

from __future__ import annotations

import csv
import struct
import threading
import time
from dataclasses import dataclass
from queue import Empty, SimpleQueue
from typing import Any, Callable

import numpy as np

from .particles import ParticleEnsemble

_POLL = 0.02  # seconds between watchdog/failure checks while blocked


class CommError(RuntimeError):
    pass


class DeadlockError(CommError):
    """A blocking primitive exceeded the watchdog timeout."""


class RankFailedError(CommError):
    def __init__(self, rank: int, message: str):
        super().__init__(message)
        self.rank = rank


class _JobAborted(CommError):
    """Internal: some other rank failed; unwind this worker quietly."""


# ---------------------------------------------------------------------------
# Payload serialization
# ---------------------------------------------------------------------------

_T_NONE, _T_BOOL, _T_INT, _T_FLOAT, _T_STR, _T_BYTES = 0, 1, 2, 3, 4, 5
_T_ARRAY, _T_LIST, _T_TUPLE, _T_DICT, _T_PARTICLES = 6, 7, 8, 9, 10


def _pack_into(out: bytearray, obj) -> None:
    if obj is None:
        out.append(_T_NONE)
    elif isinstance(obj, bool):
        out.append(_T_BOOL)
        out.append(1 if obj else 0)
    elif isinstance(obj, (int, np.integer)):
        out.append(_T_INT)
        out += struct.pack("<q", int(obj))
    elif isinstance(obj, (float, np.floating)):
        out.append(_T_FLOAT)
        out += struct.pack("<d", float(obj))
    elif isinstance(obj, str):
        raw = obj.encode("utf-8")
        out.append(_T_STR)
        out += struct.pack("<q", len(raw))
        out += raw
    elif isinstance(obj, bytes):
        out.append(_T_BYTES)
        out += struct.pack("<q", len(obj))
        out += obj
    elif isinstance(obj, np.ndarray):
        a = np.ascontiguousarray(obj)
        dt = a.dtype.str.encode("ascii")
        out.append(_T_ARRAY)
        out += struct.pack("<q", len(dt))
        out += dt
        out += struct.pack("<q", a.ndim)
        out += struct.pack(f"<{a.ndim}q", *a.shape)
        out += a.tobytes()
    elif isinstance(obj, (list, tuple)):
        out.append(_T_LIST if isinstance(obj, list) else _T_TUPLE)
        out += struct.pack("<q", len(obj))
        for item in obj:
            _pack_into(out, item)
    elif isinstance(obj, dict):
        out.append(_T_DICT)
        out += struct.pack("<q", len(obj))
        for key, item in obj.items():
            if not isinstance(key, str):
                raise CommError(f"payload dict keys must be str, got {type(key)}")
            _pack_into(out, key)
            _pack_into(out, item)
    elif isinstance(obj, ParticleEnsemble):
        out.append(_T_PARTICLES)
        _pack_into(out, obj.x)
        _pack_into(out, obj.v)
        _pack_into(out, obj.ids)
        _pack_into(
            out,
            (
                obj.q_per_particle,
                obj.m_per_particle,
                obj.total_charge,
                obj.total_mass,
                obj.global_count,
            ),
        )
    else:
        raise CommError(f"unsupported payload type: {type(obj)}")


def _unpack_from(buf: memoryview, pos: int):
    tag = buf[pos]
    pos += 1
    if tag == _T_NONE:
        return None, pos
    if tag == _T_BOOL:
        return bool(buf[pos]), pos + 1
    if tag == _T_INT:
        return struct.unpack_from("<q", buf, pos)[0], pos + 8
    if tag == _T_FLOAT:
        return struct.unpack_from("<d", buf, pos)[0], pos + 8
    if tag in (_T_STR, _T_BYTES):
        n = struct.unpack_from("<q", buf, pos)[0]
        pos += 8
        raw = bytes(buf[pos : pos + n])
        return (raw.decode("utf-8") if tag == _T_STR else raw), pos + n
    if tag == _T_ARRAY:
        n = struct.unpack_from("<q", buf, pos)[0]
        pos += 8
        dt = np.dtype(bytes(buf[pos : pos + n]).decode("ascii"))
        pos += n
        ndim = struct.unpack_from("<q", buf, pos)[0]
        pos += 8
        shape = struct.unpack_from(f"<{ndim}q", buf, pos)
        pos += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        nbytes = count * dt.itemsize
        arr = np.frombuffer(buf[pos : pos + nbytes], dtype=dt).reshape(shape).copy()
        return arr, pos + nbytes
    if tag in (_T_LIST, _T_TUPLE):
        n = struct.unpack_from("<q", buf, pos)[0]
        pos += 8
        items = []
        for _ in range(n):
            item, pos = _unpack_from(buf, pos)
            items.append(item)
        return (items if tag == _T_LIST else tuple(items)), pos
    if tag == _T_DICT:
        n = struct.unpack_from("<q", buf, pos)[0]
        pos += 8
        out = {}
        for _ in range(n):
            key, pos = _unpack_from(buf, pos)
            val, pos = _unpack_from(buf, pos)
            out[key] = val
        return out, pos
    if tag == _T_PARTICLES:
        x, pos = _unpack_from(buf, pos)
        v, pos = _unpack_from(buf, pos)
        ids, pos = _unpack_from(buf, pos)
        (q, m, qt, mt, gc), pos = _unpack_from(buf, pos)
        ens = ParticleEnsemble(
            x=x, v=v, ids=ids, q_per_particle=q, m_per_particle=m,
            total_charge=qt, total_mass=mt, global_count=gc,
        )
        return ens, pos
    raise CommError(f"corrupt payload: unknown tag {tag}")


def encode_payload(obj) -> bytes:
    out = bytearray()
    _pack_into(out, obj)
    return bytes(out)


def decode_payload(data: bytes):
    obj, pos = _unpack_from(memoryview(data), 0)
    if pos != len(data):
        raise CommError("corrupt payload: trailing bytes")
    return obj


# ---------------------------------------------------------------------------
# Call log
# ---------------------------------------------------------------------------

@dataclass
class CallRecord:
    rank: int
    primitive: str   # send | recv | allreduce | alltoall
    comm: str
    peer: int        # -1 for collectives
    nbytes: int


class CallLog:
    """Thread-safe record of every data-moving primitive invocation."""

    def __init__(self):
        self._lock = threading.Lock()
        self.records: list[CallRecord] = []

    def add(self, rank, primitive, comm, peer, nbytes):
        with self._lock:
            self.records.append(CallRecord(rank, primitive, comm, peer, nbytes))

    def primitives(self) -> set[str]:
        return {r.primitive for r in self.records}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["rank", "primitive", "comm", "peer", "nbytes"])
            for r in self.records:
                w.writerow([r.rank, r.primitive, r.comm, r.peer, r.nbytes])


# ---------------------------------------------------------------------------
# Job bookkeeping shared by all ranks of one spawn
# ---------------------------------------------------------------------------

class _Job:
    def __init__(self, watchdog: float, call_log: CallLog | None):
        self.watchdog = watchdog
        self.call_log = call_log
        self.failed = threading.Event()
        self._lock = threading.Lock()
        self.failures: list[tuple[int, BaseException]] = []

    def fail(self, rank: int, exc: BaseException):
        with self._lock:
            self.failures.append((rank, exc))
        self.failed.set()

    def check(self):
        if self.failed.is_set():
            raise _JobAborted("aborted: another rank failed")

    def log(self, rank, primitive, comm, peer, nbytes):
        if self.call_log is not None:
            self.call_log.add(rank, primitive, comm, peer, nbytes)


_PENDING = object()


class _CollectiveFailure:
    def __init__(self, message):
        self.message = message


class _Slot:
    __slots__ = ("kind", "values", "result", "readers")

    def __init__(self, kind):
        self.kind = kind
        self.values: dict[int, Any] = {}
        self.result = _PENDING
        self.readers = 0


class _Core:
    """State shared by all ranks of one communicator."""

    def __init__(self, job: _Job, size: int, label: str):
        self.job = job
        self.size = size
        self.label = label
        self.cond = threading.Condition()
        self.queues: dict[tuple[int, int], SimpleQueue] = {}
        self.slots: dict[int, _Slot] = {}
        self.op_seq = [0] * size

    def queue(self, src: int, dst: int) -> SimpleQueue:
        with self.cond:
            q = self.queues.get((src, dst))
            if q is None:
                q = SimpleQueue()
                self.queues[(src, dst)] = q
            return q

    def collective(self, rank: int, kind: str, value, combine: Callable, extract: Callable):
        """Deposit `value`; last depositor runs `combine`; everyone extracts."""
        deadline = time.monotonic() + self.job.watchdog
        with self.cond:
            seq = self.op_seq[rank]
            self.op_seq[rank] += 1
            slot = self.slots.get(seq)
            if slot is None:
                slot = _Slot(kind)
                self.slots[seq] = slot
            if slot.kind != kind:
                slot.result = _CollectiveFailure(
                    f"mismatched collectives on comm '{self.label}': {slot.kind} vs {kind}"
                )
                self.cond.notify_all()
            slot.values[rank] = value
            if len(slot.values) == self.size and slot.result is _PENDING:
                try:
                    slot.result = combine(slot.values)
                except Exception as exc:
                    slot.result = _CollectiveFailure(str(exc))
                self.cond.notify_all()
            while slot.result is _PENDING:
                self.cond.wait(timeout=_POLL)
                self.job.check()
                if time.monotonic() > deadline:
                    raise DeadlockError(
                        f"rank {rank} blocked in {kind} on comm '{self.label}' "
                        f"({len(slot.values)}/{self.size} ranks arrived)"
                    )
            result = slot.result
            slot.readers += 1
            if slot.readers == self.size:
                del self.slots[seq]
        if isinstance(result, _CollectiveFailure):
            raise CommError(result.message)
        return extract(result, rank)


def _tree_sum(arrays: list[np.ndarray]) -> np.ndarray:
    """Fixed binary-tree reduction: bit-identical results for a given layout."""
    level = list(arrays)
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            nxt.append(level[i] + level[i + 1])
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


# ---------------------------------------------------------------------------
# Per-rank facade
# ---------------------------------------------------------------------------

class Comm:
    """Rank-local view of one communicator."""

    def __init__(self, core: _Core, rank: int):
        self._core = core
        self.rank = rank

    @property
    def size(self) -> int:
        return self._core.size

    @property
    def label(self) -> str:
        return self._core.label

    # -- point to point ----------------------------------------------------

    def send(self, dest: int, payload) -> None:
        if not 0 <= dest < self.size:
            raise CommError(f"send dest {dest} out of range on '{self.label}'")
        data = encode_payload(payload)
        self._core.job.log(self.rank, "send", self.label, dest, len(data))
        self._core.queue(self.rank, dest).put(data)

    def recv(self, src: int):
        if not 0 <= src < self.size:
            raise CommError(f"recv src {src} out of range on '{self.label}'")
        q = self._core.queue(src, self.rank)
        deadline = time.monotonic() + self._core.job.watchdog
        while True:
            try:
                data = q.get(timeout=_POLL)
                break
            except Empty:
                self._core.job.check()
                if time.monotonic() > deadline:
                    raise DeadlockError(
                        f"rank {self.rank} blocked receiving from rank {src} "
                        f"on comm '{self.label}'"
                    )
        self._core.job.log(self.rank, "recv", self.label, src, len(data))
        return decode_payload(data)

    # -- collectives ---------------------------------------------------------

    def allreduce_sum(self, values: np.ndarray) -> np.ndarray:
        arr = np.asarray(values)
        self._core.job.log(self.rank, "allreduce", self.label, -1, arr.nbytes)

        def combine(vals: dict[int, np.ndarray]):
            ordered = [vals[r] for r in range(self.size)]
            shape = ordered[0].shape
            for r, a in enumerate(ordered):
                if a.shape != shape:
                    raise CommError(
                        f"allreduce length mismatch on '{self.label}': "
                        f"rank 0 has {shape}, rank {r} has {a.shape}"
                    )
            return _tree_sum(ordered)

        return self._core.collective(
            self.rank, "allreduce", arr, combine, lambda res, rank: res.copy()
        )

    def alltoall(self, send_blocks: list[np.ndarray]) -> list[np.ndarray]:
        if len(send_blocks) != self.size:
            raise CommError(
                f"alltoall needs {self.size} blocks, got {len(send_blocks)}"
            )
        blocks = [np.asarray(b) for b in send_blocks]
        nbytes = sum(b.nbytes for b in blocks)
        self._core.job.log(self.rank, "alltoall", self.label, -1, nbytes)

        def combine(vals: dict[int, list[np.ndarray]]):
            return [vals[r] for r in range(self.size)]

        def extract(matrix, rank):
            return [matrix[i][rank].copy() for i in range(self.size)]

        return self._core.collective(self.rank, "alltoall", blocks, combine, extract)

    def split(self, color: int, key: int, label: str | None = None) -> "Comm":
        parent = self

        def combine(vals: dict[int, tuple[int, int]]):
            groups: dict[int, list[tuple[int, int]]] = {}
            for rank in range(self.size):
                c, k = vals[rank]
                groups.setdefault(c, []).append((k, rank))
            cores = {}
            members = {}
            for c, pairs in groups.items():
                pairs.sort()  # order by key, then parent rank
                name = label if label is not None else f"{parent.label}/{c}"
                cores[c] = _Core(parent._core.job, len(pairs), name)
                members[c] = [rank for _, rank in pairs]
            return cores, members

        def extract(result, rank):
            cores, members = result
            c, _ = (color, key)
            new_rank = members[c].index(rank)
            return Comm(cores[c], new_rank)

        return self._core.collective(
            self.rank, "split", (int(color), int(key)), combine, extract
        )


# ---------------------------------------------------------------------------
# Rank context and SPMD launcher
# ---------------------------------------------------------------------------

@dataclass
class SlabTopology:
    axis: int
    index: int
    left: int
    right: int


@dataclass
class RankContext:
    world: Comm
    space: Comm | None = None
    time: Comm | None = None
    slab: SlabTopology | None = None

    @property
    def world_rank(self) -> int:
        return self.world.rank

    @property
    def world_size(self) -> int:
        return self.world.size


def spawn_spmd(
    num_ranks: int,
    program: Callable[[RankContext], Any],
    *,
    watchdog: float = 60.0,
    call_log: CallLog | None = None,
) -> list:
    """Run `program` concurrently on `num_ranks` in-process ranks.

    Results are returned in rank order.  Any rank failure aborts the whole
    job; the raised error names the failing rank (or all watchdog-blocked
    ranks for a deadlock).
    """
    if num_ranks < 1:
        raise ValueError(f"num_ranks must be >= 1, got {num_ranks}")
    job = _Job(watchdog, call_log)
    core = _Core(job, num_ranks, "world")
    results = [None] * num_ranks

    def worker(rank: int):
        try:
            results[rank] = program(RankContext(world=Comm(core, rank)))
        except _JobAborted:
            pass
        except BaseException as exc:  # noqa: BLE001 - must capture rank panics
            job.fail(rank, exc)

    threads = [
        threading.Thread(target=worker, args=(r,), name=f"spmd-rank-{r}", daemon=True)
        for r in range(num_ranks)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    if job.failures:
        deadlocks = [(r, e) for r, e in job.failures if isinstance(e, DeadlockError)]
        others = [(r, e) for r, e in job.failures if not isinstance(e, DeadlockError)]
        if others:
            rank, exc = others[0]
            raise RankFailedError(rank, f"rank {rank} failed: {exc!r}") from exc
        blocked = sorted(r for r, _ in deadlocks)
        rank, exc = deadlocks[0]
        raise DeadlockError(f"deadlock: blocked ranks {blocked}; first: {exc}") from exc
    return results
