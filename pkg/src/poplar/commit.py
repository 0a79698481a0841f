"""Commit stage: per-worker Qww/Qwr queues and the global CSN."""
from __future__ import annotations

import itertools
import threading
from collections import deque

from . import invariants
from .core import Transaction, TxnClass, TxnState


class CommitQueues:
    """Private queues of one worker.

    ``qww`` holds write-only transactions, gated by the worker's own buffer
    DSN. ``qwr`` holds everything that read something, gated by the CSN.
    """

    def __init__(self) -> None:
        self.qww: deque[Transaction] = deque()
        self.qwr: deque[Transaction] = deque()
        self._last_writer_ssn = {"ww": 0, "wr": 0}

    def __len__(self) -> int:
        return len(self.qww) + len(self.qwr)


def enqueue(queues: CommitQueues, txn: Transaction, centralized: bool = False) -> None:
    cls = txn.txn_class
    if cls is TxnClass.WRITE_ONLY and not centralized:
        q, tag = queues.qww, "ww"
    else:
        q, tag = queues.qwr, "wr"
    if cls is not TxnClass.READ_ONLY:
        invariants.check("queue_ssn_order", txn.ssn >= queues._last_writer_ssn[tag],
                         f"{txn.ssn} < {queues._last_writer_ssn[tag]}")
        queues._last_writer_ssn[tag] = txn.ssn
    q.append(txn)


class CommitCoordinator:
    """Holds the CSN: the minimum DSN over every log buffer."""

    def __init__(self, buffers, start: int = 0) -> None:
        self.buffers = list(buffers)
        self.csn = start
        self.floor = 0
        self._lock = threading.Lock()
        self.trace = None

    def advance_csn(self) -> int:
        with self._lock:
            prev = self.csn
            low = min(b.dsn for b in self.buffers)
            if low > prev:
                if self.trace is not None:
                    self.trace.csn(low)
                self.csn = low
            invariants.check("csn_monotone", self.csn >= prev)
            invariants.check("csn_le_dsn", all(self.csn <= b.dsn for b in self.buffers))
            return self.csn

    def heartbeat_target(self) -> int:
        return max(max(b.dsn for b in self.buffers), self.floor)

    def request_floor(self, ssn: int) -> None:
        with self._lock:
            if ssn > self.floor:
                self.floor = ssn


class CommitLog:
    """Append-only record of commit acknowledgements (verification builds)."""

    def __init__(self) -> None:
        self.entries: list[tuple[int, int, int]] = []
        self._order = itertools.count()

    def record(self, txn: Transaction) -> int:
        idx = next(self._order)
        self.entries.append((txn.id, txn.ssn, idx))
        return idx


def try_commit(worker, now: float = 0.0, skip_durability: bool = False) -> list[int]:
    """Commit every eligible head entry of the worker's queues.

    Qww entries need ``ssn <= dsn`` of the worker's buffer; Qwr entries need
    ``ssn <= csn``. Returns the ids committed, in commit order.
    """
    queues = worker.queues
    done = []
    dsn = worker.buffer.dsn
    csn = worker.coordinator.csn
    for q, gate in ((queues.qww, dsn), (queues.qwr, csn)):
        while q and (skip_durability or q[0].ssn <= gate):
            txn = q.popleft()
            txn.state = TxnState.COMMITTED
            txn.commit_time = now
            worker.on_commit(txn)
            done.append(txn.id)
    return done
