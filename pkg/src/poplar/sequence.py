"""Decentralized SSN allocation.

A transaction's SSN is one more than the largest of (a) the SSN stamps of
every tuple it read or wrote and (b) the SSN of the log buffer it is mapped
to. Read-only transactions just take the tuple maximum and touch nothing.
"""
from __future__ import annotations

import threading
from collections.abc import Iterable, Mapping

from .core import TupleHeader, Transaction


class BufferSsnState:
    """Allocation state of one log buffer, guarded by its latch.

    ``ssn`` and ``offset`` only change with ``latch`` held. Subclasses override
    ``_reserve``/``_account`` to tie the reservation to real ring space; the
    base class has unbounded space, which is all the sequence tests need.
    """

    def __init__(self, ssn: int = 0, offset: int = 0) -> None:
        self.ssn = ssn
        self.offset = offset
        self.latch = threading.Lock()

    def _reserve(self, record_len: int):
        return self.offset, None

    def _account(self, slot, record_len: int) -> None:
        self.offset += record_len


def compute_base(read_set: Mapping[int, int] | Iterable[int], write_set: Mapping[int, int] | Iterable[int] = ()) -> int:
    """Max SSN over both sets (mappings of key -> ssn, or bare ssn iterables)."""
    base = 0
    for s in (read_set, write_set):
        vals = s.values() if isinstance(s, Mapping) else s
        for v in vals:
            if v > base:
                base = v
    return base


def allocate_ssn(txn: Transaction | None, buffer: BufferSsnState, record_len: int, base: int) -> tuple[int, int, object]:
    """Assign ``txn.ssn`` and reserve ``record_len`` bytes on ``buffer``.

    Returns ``(ssn, offset, slot)``. Raises BufferFull/RingFull from the
    buffer's reservation hook without changing any state.
    """
    with buffer.latch:
        offset, slot = buffer._reserve(record_len)
        ssn = max(base, buffer.ssn) + 1
        buffer.ssn = ssn
        buffer._account(slot, record_len)
    if txn is not None:
        txn.ssn = ssn
    return ssn, offset, slot


def allocate_readonly_ssn(txn: Transaction, base: int | None = None) -> int:
    if base is None:
        base = compute_base(txn.read_set)
    txn.ssn = base
    return base


def stamp_write_set(txn: Transaction, tuples: Mapping[int, TupleHeader]) -> None:
    """Install the write set on locked tuples, stamping each with ``txn.ssn``."""
    ssn = txn.ssn
    for key, value in txn.write_set.items():
        tuples[key].version = (ssn, value)
