"""OCC transactions over an in-memory table, with early lock release at precommit.

Steps that may have to wait (write locks, buffer space) are generators that
yield ``BLOCKED`` instead of spinning, and ``STEP`` at points where another
actor may interleave. Under real threads the driver just keeps calling
``next``; the deterministic scheduler uses the same yields to interleave
every actor from a single thread.
"""
from __future__ import annotations

import bisect
import itertools
import struct
import time
from collections.abc import Iterable

from .commit import CommitQueues, enqueue, try_commit
from .core import (
    BufferFull,
    KeyNotFound,
    LogRecord,
    RingFull,
    Transaction,
    TupleHeader,
    TxnClass,
    TxnState,
    record_size,
    serialize_record,
)
from .sequence import allocate_readonly_ssn, compute_base, stamp_write_set

STEP = "step"
BLOCKED = "blocked"


def drive(gen, idle=lambda: time.sleep(0)):
    """Run a step generator to completion and return its value."""
    try:
        while True:
            if next(gen) is BLOCKED:
                idle()
    except StopIteration as stop:
        return stop.value


class Table:
    """Fixed key space of tuples. Keys are never inserted or deleted after load."""

    def __init__(self, items: Iterable[tuple[int, bytes]] | None = None) -> None:
        self.tuples: dict[int, TupleHeader] = {}
        for key, value in items or ():
            self.tuples[key] = TupleHeader(key, value)
        self._sorted = sorted(self.tuples)

    def __len__(self) -> int:
        return len(self.tuples)

    def __contains__(self, key: int) -> bool:
        return key in self.tuples

    def __getitem__(self, key: int) -> TupleHeader:
        try:
            return self.tuples[key]
        except KeyError:
            raise KeyNotFound(key) from None

    def keys(self) -> list[int]:
        return self._sorted

    def range_keys(self, start: int, n: int) -> list[int]:
        i = bisect.bisect_left(self._sorted, start)
        return self._sorted[i:i + n]

    def put(self, key: int, value: bytes, ssn: int) -> None:
        tup = self.tuples.get(key)
        if tup is None:
            self.tuples[key] = TupleHeader(key, value, ssn)
            bisect.insort(self._sorted, key)
        else:
            tup.version = (ssn, value)

    def snapshot(self) -> dict[int, tuple[int, bytes]]:
        return {k: t.version for k, t in self.tuples.items()}

    def values(self) -> dict[int, bytes]:
        return {k: t.version[1] for k, t in self.tuples.items()}

    def max_ssn(self) -> int:
        return max((t.version[0] for t in self.tuples.values()), default=0)

    def to_bytes(self) -> bytes:
        out = bytearray()
        for k in self._sorted:
            ssn, value = self.tuples[k].version
            out += struct.pack("<QQI", k, ssn, len(value)) + value
        return bytes(out)


class WorkerStats:
    def __init__(self) -> None:
        self.commits = 0
        self.aborts = 0
        self.latencies: list[float] = []
        self.e2e: list[float] = []
        self.commit_times: list[float] = []
        self.log_contention = 0.0
        self.log_work = 0.0
        self.busy = 0.0


class Worker:
    """Executes transactions on behalf of one thread, mapped to one log buffer."""

    _ids = itertools.count(1)

    def __init__(self, wid: int, engine, buffer) -> None:
        self.id = wid
        self.engine = engine
        self.table: Table = engine.table
        self.buffer = buffer
        self.coordinator = engine.coordinator
        self.queues = CommitQueues()
        self.stats = WorkerStats()
        self.trace = engine.trace
        self.fine_grained = engine.fine_grained

    # -- read phase --

    def begin(self) -> Transaction:
        return Transaction(id=next(self.engine.txn_ids), worker=self.id, buffer_id=self.buffer.id,
                           begin_time=self.engine.clock.now())

    def read(self, txn: Transaction, key: int) -> bytes:
        if key in txn.write_set:
            return txn.write_set[key]
        ssn, value = self.table[key].version
        if key not in txn.read_set:
            txn.read_set[key] = ssn
            if self.trace is not None:
                self.trace.read(txn.id, key, ssn)
        return value

    def write(self, txn: Transaction, key: int, value: bytes) -> None:
        if key not in self.table:
            raise KeyNotFound(key)
        txn.write_set[key] = value

    def scan(self, txn: Transaction, start: int, n: int) -> list[bytes]:
        return [self.read(txn, k) for k in self.table.range_keys(start, n)]

    # -- validation phase --

    def validate(self, txn: Transaction):
        tid = txn.id
        tuples = self.table.tuples
        locked = []
        for key in sorted(txn.write_set):
            tup = tuples[key]
            while not tup.try_lock(tid):
                yield BLOCKED
            locked.append(tup)
        for key, seen in txn.read_set.items():
            tup = tuples[key]
            if tup.locked_by_other(tid) or tup.version[0] != seen:
                for t in locked:
                    t.unlock()
                txn.state = TxnState.ABORTED
                if self.trace is not None:
                    self.trace.abort(tid)
                return False
        txn.state = TxnState.VALIDATED
        return True

    # -- write phase --

    def precommit(self, txn: Transaction):
        engine = self.engine
        tuples = self.table.tuples
        trace = self.trace
        cls = txn.txn_class
        if cls is TxnClass.READ_ONLY:
            allocate_readonly_ssn(txn)
            if trace is not None:
                trace.precommit(txn.id, txn.ssn, cls, -1)
            self._enqueue(txn)
            return
        entries = tuple(sorted(txn.write_set.items()))
        rec_len = record_size(entries)
        if engine.skip_waw:
            base = compute_base(txn.read_set)
        else:
            base = compute_base(txn.read_set, [tuples[k].version[0] for k in txn.write_set])
        t0 = time.perf_counter()
        while True:
            try:
                ssn, offset, slot = engine.allocate(txn, self.buffer, rec_len, base)
                break
            except (BufferFull, RingFull):
                yield BLOCKED
        t1 = time.perf_counter()
        self.stats.log_contention += t1 - t0
        if trace is not None:
            trace.precommit(txn.id, ssn, cls, self.buffer.id)
        if self.fine_grained:
            yield STEP
        stamp_write_set(txn, tuples)
        if trace is not None:
            for key in txn.write_set:
                trace.write(txn.id, key, ssn)
        for key in txn.write_set:
            tuples[key].unlock()
        if self.fine_grained:
            yield STEP
        t2 = time.perf_counter()
        data = serialize_record(LogRecord(ssn, txn.id, cls is TxnClass.WRITE_ONLY, entries))
        self.buffer.insert_record(offset, slot, data)
        self.stats.log_work += time.perf_counter() - t2
        self._enqueue(txn)

    def _enqueue(self, txn: Transaction) -> None:
        txn.state = TxnState.PRECOMMITTED
        txn.enqueue_time = self.engine.clock.now()
        enqueue(self.queues, txn, centralized=self.engine.centralized)

    # -- driver helpers --

    def run_txn(self, ops):
        """Execute one transaction program, retrying on abort until it precommits."""
        engine = self.engine
        while True:
            txn = self.begin()
            for op in ops:
                kind = op[0]
                if kind == "r":
                    self.read(txn, op[1])
                elif kind == "w":
                    value = op[2] if len(op) > 2 and op[2] is not None else engine.make_value(txn.id, op[1])
                    self.write(txn, op[1], value)
                elif kind == "scan":
                    self.scan(txn, op[1], op[2])
                else:
                    raise ValueError(f"unknown op {op!r}")
                if self.fine_grained:
                    yield STEP
            ok = yield from self.validate(txn)
            if ok:
                yield from self.precommit(txn)
                return txn
            self.stats.aborts += 1
            yield BLOCKED

    def try_commit(self) -> list[int]:
        return try_commit(self, self.engine.clock.now(), skip_durability=self.engine.skip_durability)

    def on_commit(self, txn: Transaction) -> None:
        self.stats.commits += 1
        self.stats.latencies.append(txn.commit_time - txn.enqueue_time)
        self.stats.e2e.append(txn.commit_time - txn.begin_time)
        self.stats.commit_times.append(txn.commit_time)
        if self.trace is not None:
            self.trace.commit(txn.id, txn.ssn)
        if self.engine.commit_log is not None:
            self.engine.commit_log.record(txn)

    def run(self, programs):
        """Worker main loop: run every program, commit opportunistically, then drain."""
        for ops in programs:
            if self.engine.halted:
                return
            yield from self.run_txn(ops)
            self.try_commit()
            if self.engine.think_time:
                self.engine.clock.sleep(self.engine.think_time)
            yield STEP
        while self.queues:
            if self.engine.halted:
                return
            self.try_commit()
            if self.queues:
                yield BLOCKED
