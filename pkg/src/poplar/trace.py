"""Execution traces captured in verification runs."""
from __future__ import annotations

import threading

from .core import TxnClass

READ = "read"
WRITE = "write"
PRECOMMIT = "precommit"
COMMIT = "commit"
DURABLE = "durable"
CSN = "csn"
ABORT = "abort"


class ExecutionTrace:
    """Totally ordered event list; index in ``events`` is the global order.

    Once ``seal()`` is called (at a crash) further events are dropped, so the
    trace ends exactly where the surviving state was frozen.
    """

    def __init__(self, num_buffers: int) -> None:
        self.num_buffers = num_buffers
        self.events: list[tuple] = []
        self.sealed = False
        self._lock = threading.Lock()

    def _add(self, ev: tuple) -> None:
        with self._lock:
            if not self.sealed:
                self.events.append(ev)

    def seal(self) -> None:
        with self._lock:
            self.sealed = True

    def read(self, txn: int, key: int, ssn: int) -> None:
        self._add((READ, txn, key, ssn))

    def write(self, txn: int, key: int, ssn: int) -> None:
        self._add((WRITE, txn, key, ssn))

    def precommit(self, txn: int, ssn: int, cls: TxnClass, buffer: int) -> None:
        self._add((PRECOMMIT, txn, ssn, cls, buffer))

    def commit(self, txn: int, ssn: int) -> None:
        self._add((COMMIT, txn, ssn))

    def durable(self, buffer: int, dsn: int) -> None:
        self._add((DURABLE, buffer, dsn))

    def csn(self, csn: int) -> None:
        self._add((CSN, csn))

    def abort(self, txn: int) -> None:
        self._add((ABORT, txn))

    def __len__(self) -> int:
        return len(self.events)

    def committed(self) -> set[int]:
        return {e[1] for e in self.events if e[0] == COMMIT}
