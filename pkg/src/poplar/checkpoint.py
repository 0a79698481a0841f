"""Fuzzy parallel checkpoints: n scanner threads, m files each, plus a metadata file."""
from __future__ import annotations

import enum
import re
import struct
import threading
import time
import zlib
from dataclasses import dataclass, field

from .core import ChecksumMismatch, CorruptMetadata
from .device import Device, Storage
from .txn import BLOCKED, STEP, drive

_FILE_MAGIC = b"PCKF"
_META_MAGIC = b"PCKM"
_FILE_HEAD = struct.Struct("<4sIQIIQ")
_REC = struct.Struct("<QQI")
_META_HEAD = struct.Struct("<4sIQQBQI")
_CRC = struct.Struct("<I")
_META_RE = re.compile(r"ckpt-(\d+)\.meta$")


class CheckpointStatus(enum.Enum):
    IN_PROGRESS = 0
    VALID = 1
    NOT_YET = 2


@dataclass
class CheckpointMetadata:
    epoch: int
    rsn: int
    files: list[str] = field(default_factory=list)
    max_observed: list[int] = field(default_factory=list)
    status: CheckpointStatus = CheckpointStatus.IN_PROGRESS

    @property
    def name(self) -> str:
        return meta_name(self.epoch)


def meta_name(epoch: int) -> str:
    return f"ckpt-{epoch}.meta"


def file_name(epoch: int, thread: int, idx: int) -> str:
    return f"ckpt-{epoch}-{thread}-{idx}.dat"


def encode_metadata(meta: CheckpointMetadata) -> bytes:
    out = bytearray(_META_HEAD.pack(_META_MAGIC, 1, meta.epoch, meta.rsn, meta.status.value,
                                    max(meta.max_observed, default=0), len(meta.max_observed)))
    for v in meta.max_observed:
        out += struct.pack("<Q", v)
    out += struct.pack("<I", len(meta.files))
    for name in meta.files:
        raw = name.encode()
        out += struct.pack("<H", len(raw)) + raw
    out += _CRC.pack(zlib.crc32(out))
    return bytes(out)


def decode_metadata(data: bytes) -> CheckpointMetadata:
    if len(data) < _META_HEAD.size + 8:
        raise CorruptMetadata("short metadata")
    (crc,) = _CRC.unpack_from(data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise CorruptMetadata("metadata checksum")
    try:
        magic, _ver, epoch, rsn, status, _mx, nthreads = _META_HEAD.unpack_from(data, 0)
        if magic != _META_MAGIC:
            raise CorruptMetadata("bad magic")
        pos = _META_HEAD.size
        observed = list(struct.unpack_from(f"<{nthreads}Q", data, pos))
        pos += 8 * nthreads
        (nfiles,) = struct.unpack_from("<I", data, pos)
        pos += 4
        files = []
        for _ in range(nfiles):
            (ln,) = struct.unpack_from("<H", data, pos)
            pos += 2
            files.append(data[pos:pos + ln].decode())
            pos += ln
        return CheckpointMetadata(epoch, rsn, files, observed, CheckpointStatus(status))
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CorruptMetadata(str(e)) from e


def encode_file(epoch: int, thread: int, idx: int, rows) -> bytes:
    out = bytearray(_FILE_HEAD.pack(_FILE_MAGIC, 1, epoch, thread, idx, len(rows)))
    for key, ssn, value in rows:
        out += _REC.pack(key, ssn, len(value))
        out += value
    out += _CRC.pack(zlib.crc32(out))
    return bytes(out)


def decode_file(data: bytes) -> list[tuple[int, int, bytes]]:
    if len(data) < _FILE_HEAD.size + 4:
        raise ChecksumMismatch("short checkpoint file")
    (crc,) = _CRC.unpack_from(data, len(data) - 4)
    if zlib.crc32(memoryview(data)[:-4]) != crc:
        raise ChecksumMismatch("checkpoint file checksum")
    magic, _ver, _epoch, _t, _i, count = _FILE_HEAD.unpack_from(data, 0)
    if magic != _FILE_MAGIC:
        raise ChecksumMismatch("bad checkpoint magic")
    rows = []
    pos = _FILE_HEAD.size
    for _ in range(count):
        key, ssn, vlen = _REC.unpack_from(data, pos)
        pos += _REC.size
        rows.append((key, ssn, bytes(data[pos:pos + vlen])))
        pos += vlen
    return rows


def list_metadata(storage: Storage) -> list[int]:
    """Epochs that have a metadata file, newest first."""
    out = []
    for n in storage.names():
        if m := _META_RE.match(n):
            out.append(int(m.group(1)))
    return sorted(out, reverse=True)


def validate_checkpoint(meta: CheckpointMetadata, current_csn: int) -> CheckpointStatus:
    """Valid once the CSN has passed every SSN the scanners saw.

    A scan that only saw initial-state tuples (max SSN 0) is valid at once.
    """
    top = max(meta.max_observed, default=0)
    if top == 0 or current_csn > top:
        return CheckpointStatus.VALID
    return CheckpointStatus.NOT_YET


def split(seq, parts: int):
    n = len(seq)
    return [seq[i * n // parts:(i + 1) * n // parts] for i in range(parts)]


class CheckpointDaemon:
    def __init__(self, engine, n: int | None = None, m: int | None = None, yield_every: int = 16) -> None:
        self.engine = engine
        self.n = n or engine.config.checkpoint_threads
        self.m = m or engine.config.checkpoint_files_per_thread
        self.yield_every = yield_every
        self.storage: Storage = engine.storage
        self.devices = [Device(f"ckpt{t}", self.storage, engine.device_kind, engine.bandwidth, engine.latency,
                               engine.crash, engine.clock) for t in range(self.n)]
        self.meta: CheckpointMetadata | None = None
        self.validated_at: float | None = None
        self.on_valid = None

    def begin(self) -> CheckpointMetadata:
        epochs = list_metadata(self.storage)
        epoch = (epochs[0] + 1) if epochs else 1
        rsn = self.engine.coordinator.csn
        files = [file_name(epoch, t, i) for t in range(self.n) for i in range(self.m)]
        self.meta = CheckpointMetadata(epoch, rsn, files, [0] * self.n)
        self._write_meta()
        return self.meta

    def _write_meta(self) -> None:
        # all-or-nothing: a crash mid-write leaves the previous metadata intact
        self.devices[0].write_file(self.meta.name, encode_metadata(self.meta), atomic=True)

    def scan_partition(self, t: int):
        """Walk partition ``t`` in key order, writing ``m`` files."""
        meta = self.meta
        tuples = self.engine.table.tuples
        owner = -(t + 1)
        part = split(self.engine.table.keys(), self.n)[t]
        top = 0
        since = 0
        for i, keys in enumerate(split(part, self.m)):
            rows = []
            for key in keys:
                tup = tuples[key]
                while not tup.try_lock(owner):
                    yield BLOCKED
                ssn, value = tup.version
                tup.unlock()
                rows.append((key, ssn, value))
                if ssn > top:
                    top = ssn
                since += 1
                if since >= self.yield_every:
                    since = 0
                    yield STEP
            self.devices[t].write_file(file_name(meta.epoch, t, i), encode_file(meta.epoch, t, i, rows))
            meta.max_observed[t] = top
            yield STEP
        meta.max_observed[t] = top

    def finish(self, pump=None):
        meta = self.meta
        top = max(meta.max_observed, default=0)
        while validate_checkpoint(meta, self.engine.coordinator.csn) is not CheckpointStatus.VALID:
            self.engine.coordinator.request_floor(top + 1)
            if pump is not None:
                pump()
            yield BLOCKED
        meta.status = CheckpointStatus.VALID
        self._write_meta()
        self.validated_at = self.engine.clock.now()
        if self.on_valid is not None:
            self.on_valid(meta)
        return meta

    def steps(self):
        """Whole checkpoint as one generator, partitions interleaved round-robin."""
        self.begin()
        parts = [self.scan_partition(t) for t in range(self.n)]
        while parts:
            for p in list(parts):
                try:
                    yield next(p)
                except StopIteration:
                    parts.remove(p)
        return (yield from self.finish())


def run_checkpoint(engine, n: int | None = None, m: int | None = None, quiescent: bool = False) -> CheckpointMetadata:
    """Take a checkpoint with ``n`` real scanner threads.

    With ``quiescent=True`` no logger threads are assumed to be running, so
    the daemon forces flushes itself while waiting for validation.
    """
    daemon = CheckpointDaemon(engine, n, m)
    daemon.begin()
    errors = []

    def scan(t):
        try:
            drive(daemon.scan_partition(t))
        except BaseException as e:  # noqa: BLE001
            errors.append(e)

    threads = [threading.Thread(target=scan, args=(t,)) for t in range(daemon.n)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    pump = engine.flush_all if quiescent else None
    poll = engine.config.flush_interval
    return drive(daemon.finish(pump), idle=lambda: time.sleep(0 if quiescent else poll))
