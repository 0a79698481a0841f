"""Parallel restart from the newest valid checkpoint plus last-writer-wins log replay."""
from __future__ import annotations

import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .checkpoint import CheckpointMetadata, CheckpointStatus, decode_file, decode_metadata, list_metadata, meta_name
from .core import ChecksumMismatch, CorruptMetadata, iter_records
from .device import Storage
from .engine import initial_table, read_manifest
from .txn import Table

log = logging.getLogger(__name__)

_WAL_RE = re.compile(r"wal-(\d+)-(\d+)\.log$")


@dataclass
class RecoveryPlan:
    rsns: int = 0
    rsne: int = 0
    checkpoint: CheckpointMetadata | None = None
    checkpoint_files: list[str] = field(default_factory=list)
    log_files: dict[int, list[str]] = field(default_factory=dict)
    last_durable: dict[int, int] = field(default_factory=dict)
    num_buffers: int = 0


@dataclass
class ReplayStats:
    records_scanned: int = 0
    entries_applied: int = 0
    skipped_window: int = 0
    skipped_lww: int = 0
    torn_tails: int = 0
    max_ssn: int = 0

    def merge(self, other: "ReplayStats") -> None:
        self.records_scanned += other.records_scanned
        self.entries_applied += other.entries_applied
        self.skipped_window += other.skipped_window
        self.skipped_lww += other.skipped_lww
        self.torn_tails += other.torn_tails
        self.max_ssn = max(self.max_ssn, other.max_ssn)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def log_files_by_buffer(storage: Storage) -> dict[int, list[str]]:
    found: dict[int, list[tuple[int, str]]] = {}
    for name in storage.names():
        if m := _WAL_RE.match(name):
            found.setdefault(int(m.group(1)), []).append((int(m.group(2)), name))
    return {b: [n for _, n in sorted(v)] for b, v in found.items()}


def last_durable_ssn(storage: Storage, files: list[str]) -> int:
    """SSN of the last checksum-valid record, searching files newest first."""
    for name in reversed(files):
        last = None
        for _, rec in iter_records(storage.read(name)):
            last = rec.ssn
        if last is not None:
            return last
    return 0


def newest_valid_checkpoint(storage: Storage) -> CheckpointMetadata | None:
    for epoch in list_metadata(storage):
        try:
            meta = decode_metadata(storage.read(meta_name(epoch)))
        except CorruptMetadata as e:
            log.warning("checkpoint %d metadata unusable (%s); trying older", epoch, e)
            continue
        if meta.status is CheckpointStatus.VALID:
            return meta
    return None


def plan_recovery(storage: Storage, num_buffers: int | None = None) -> RecoveryPlan:
    if num_buffers is None:
        num_buffers = read_manifest(storage).get("num_buffers", 0)
    logs = log_files_by_buffer(storage)
    num_buffers = max([num_buffers] + [b + 1 for b in logs])
    plan = RecoveryPlan(num_buffers=num_buffers)
    meta = newest_valid_checkpoint(storage)
    if meta is not None:
        plan.checkpoint = meta
        plan.rsns = meta.rsn
        plan.checkpoint_files = list(meta.files)
    plan.log_files = {b: logs.get(b, []) for b in range(num_buffers)}
    plan.last_durable = {b: last_durable_ssn(storage, files) for b, files in plan.log_files.items()}
    plan.rsne = min(plan.last_durable.values(), default=0)
    return plan


def recover_checkpoints(plan: RecoveryPlan, storage: Storage, threads: int = 1, initial: Table | None = None) -> Table:
    """Load every checkpoint file of the plan concurrently into a fresh table."""
    if not plan.checkpoint_files:
        if initial is not None:
            return initial
        man = read_manifest(storage)
        return initial_table(man.get("record_count", 0), man.get("value_size", 0))

    def load(name):
        try:
            return decode_file(storage.read(name))
        except FileNotFoundError:
            raise ChecksumMismatch(f"checkpoint file {name} missing") from None
        except ChecksumMismatch as e:
            raise ChecksumMismatch(f"{name}: {e}") from None

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(load, plan.checkpoint_files))
    table = Table()
    for rows in parts:
        for key, ssn, value in rows:
            table.put(key, value, ssn)
    return table


def _replay_file(name: str, data: bytes, plan: RecoveryPlan, table: Table) -> ReplayStats:
    st = ReplayStats()
    tuples = table.tuples
    rsns, rsne = plan.rsns, plan.rsne
    it = iter_records(data)
    while True:
        try:
            _, rec = next(it)
        except StopIteration as stop:
            if stop.value is not None:
                st.torn_tails += 1
            break
        st.records_scanned += 1
        st.max_ssn = max(st.max_ssn, rec.ssn)
        ssn = rec.ssn
        if not (rsns < ssn <= rsne or (rec.write_only and ssn > rsns)):
            st.skipped_window += 1
            continue
        for key, value in rec.entries:
            tup = tuples.get(key)
            if tup is None:
                table.put(key, value, ssn)
                st.entries_applied += 1
                continue
            tup.lock(-1)
            try:
                if ssn > tup.version[0]:
                    tup.version = (ssn, value)
                    st.entries_applied += 1
                else:
                    st.skipped_lww += 1
            finally:
                tup.unlock()
    return st


def replay_logs(plan: RecoveryPlan, storage: Storage, table: Table, threads: int = 1) -> ReplayStats:
    """Replay durable log records into ``table`` with last-writer-wins.

    Files are dealt round-robin to ``threads`` workers; the outcome does not
    depend on the assignment or on interleaving.
    """
    files = [n for b in sorted(plan.log_files) for n in plan.log_files[b]]
    threads = max(1, threads)
    buckets = [files[i::threads] for i in range(threads)]
    lock = threading.Lock()
    total = ReplayStats()

    def work(bucket):
        for name in bucket:
            st = _replay_file(name, storage.read(name), plan, table)
            with lock:
                total.merge(st)

    if threads == 1:
        work(files)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, buckets))
    return total


def recover(storage: Storage, threads: int = 1, initial: Table | None = None,
            num_buffers: int | None = None) -> tuple[Table, RecoveryPlan, ReplayStats]:
    plan = plan_recovery(storage, num_buffers)
    table = recover_checkpoints(plan, storage, threads, initial)
    stats = replay_logs(plan, storage, table, threads)
    return table, plan, stats
