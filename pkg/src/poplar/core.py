"""Domain types shared across the engine and the log record wire format.

Record layout (little-endian, no padding)::

    u8  magic        0xA5
    u8  flags        bit 0 set => write-only transaction
    u32 entry_count
    u32 total_len    full record size including header and trailer
    u64 ssn
    u64 txn_id
    entry_count x { u64 key, u32 value_len, value bytes }
    u32 crc32        over every preceding byte of the record
"""
from __future__ import annotations

import enum
import struct
import threading
import zlib
from dataclasses import dataclass, field

MAGIC = 0xA5
FLAG_WRITE_ONLY = 0x01

_HEADER = struct.Struct("<BBIIQQ")
_ENTRY = struct.Struct("<QI")
_CRC = struct.Struct("<I")

HEADER_SIZE = _HEADER.size
ENTRY_OVERHEAD = _ENTRY.size
TRAILER_SIZE = _CRC.size

MiB = 1 << 20


class PoplarError(Exception):
    pass


class ConfigError(PoplarError):
    pass


class KeyNotFound(PoplarError, KeyError):
    pass


class BufferFull(PoplarError):
    """Not enough free ring space; the caller waits for the logger to drain."""


class RingFull(PoplarError):
    """The next segment slot has not been recycled by the logger yet."""


class DeviceError(PoplarError):
    pass


class InjectedCrash(PoplarError):
    """Raised from a device when a scripted crash point is reached."""


class ChecksumMismatch(PoplarError):
    pass


class CorruptMetadata(PoplarError):
    pass


class TxnClass(enum.Enum):
    WRITE_ONLY = "write-only"
    HAS_READS = "has-reads"
    READ_ONLY = "read-only"


class TxnState(enum.Enum):
    ACTIVE = "active"
    VALIDATED = "validated"
    PRECOMMITTED = "precommitted"
    COMMITTED = "committed"
    ABORTED = "aborted"


class TupleHeader:
    """One table row with its SSN stamp and lock word.

    ``version`` holds ``(ssn, value)`` as a single immutable pair so a reader
    gets a consistent snapshot with one attribute load.
    """

    __slots__ = ("key", "version", "owner", "_mutex")

    def __init__(self, key: int, value: bytes, ssn: int = 0) -> None:
        self.key = key
        self.version = (ssn, value)
        self.owner = 0
        self._mutex = threading.Lock()

    @property
    def ssn(self) -> int:
        return self.version[0]

    @property
    def value(self) -> bytes:
        return self.version[1]

    def try_lock(self, owner: int) -> bool:
        if self._mutex.acquire(blocking=False):
            self.owner = owner
            return True
        return False

    def lock(self, owner: int) -> None:
        self._mutex.acquire()
        self.owner = owner

    def unlock(self) -> None:
        self.owner = 0
        self._mutex.release()

    def locked_by_other(self, owner: int) -> bool:
        o = self.owner
        return o != 0 and o != owner

    def __repr__(self) -> str:
        return f"TupleHeader(key={self.key}, ssn={self.ssn}, owner={self.owner})"


@dataclass
class Transaction:
    id: int
    worker: int
    buffer_id: int
    read_set: dict[int, int] = field(default_factory=dict)
    write_set: dict[int, bytes] = field(default_factory=dict)
    ssn: int = 0
    state: TxnState = TxnState.ACTIVE
    begin_time: float = 0.0
    enqueue_time: float = 0.0
    commit_time: float = 0.0

    @property
    def txn_class(self) -> TxnClass:
        if not self.write_set:
            return TxnClass.READ_ONLY
        if not self.read_set:
            return TxnClass.WRITE_ONLY
        return TxnClass.HAS_READS


@dataclass(frozen=True)
class LogRecord:
    ssn: int
    txn_id: int
    write_only: bool
    entries: tuple[tuple[int, bytes], ...] = ()

    @property
    def entry_count(self) -> int:
        return len(self.entries)

    @property
    def total_len(self) -> int:
        return record_size(self.entries)

    @property
    def checksum(self) -> int:
        return _CRC.unpack_from(serialize_record(self), self.total_len - TRAILER_SIZE)[0]


@dataclass(frozen=True)
class TornRecord:
    """End of the durable prefix: truncated bytes or a failed checksum."""

    reason: str


def record_size(entries) -> int:
    return HEADER_SIZE + TRAILER_SIZE + sum(ENTRY_OVERHEAD + len(v) for _, v in entries)


def serialize_record(record: LogRecord) -> bytes:
    total = record.total_len
    out = bytearray(total)
    flags = FLAG_WRITE_ONLY if record.write_only else 0
    _HEADER.pack_into(out, 0, MAGIC, flags, len(record.entries), total, record.ssn, record.txn_id)
    pos = HEADER_SIZE
    for key, value in record.entries:
        _ENTRY.pack_into(out, pos, key, len(value))
        pos += ENTRY_OVERHEAD
        out[pos:pos + len(value)] = value
        pos += len(value)
    _CRC.pack_into(out, pos, zlib.crc32(memoryview(out)[:pos]))
    return bytes(out)


def deserialize_record(buf, offset: int = 0) -> LogRecord | TornRecord:
    """Decode the record starting at ``offset``.

    Returns ``TornRecord`` for anything that is not a complete, checksum-valid
    record; during recovery that marks the end of a file's durable prefix.
    """
    view = memoryview(buf)[offset:]
    if len(view) < HEADER_SIZE + TRAILER_SIZE:
        return TornRecord("short header")
    magic, flags, count, total, ssn, txn_id = _HEADER.unpack_from(view, 0)
    if magic != MAGIC:
        return TornRecord("bad magic")
    if total < HEADER_SIZE + TRAILER_SIZE or total > len(view):
        return TornRecord("truncated")
    body_end = total - TRAILER_SIZE
    (crc,) = _CRC.unpack_from(view, body_end)
    if zlib.crc32(view[:body_end]) != crc:
        return TornRecord("checksum")
    entries = []
    pos = HEADER_SIZE
    for _ in range(count):
        if pos + ENTRY_OVERHEAD > body_end:
            return TornRecord("entry overrun")
        key, vlen = _ENTRY.unpack_from(view, pos)
        pos += ENTRY_OVERHEAD
        if pos + vlen > body_end:
            return TornRecord("entry overrun")
        entries.append((key, bytes(view[pos:pos + vlen])))
        pos += vlen
    if pos != body_end:
        return TornRecord("length mismatch")
    return LogRecord(ssn, txn_id, bool(flags & FLAG_WRITE_ONLY), tuple(entries))


def iter_records(buf):
    """Yield ``(offset, record)`` for the durable prefix of a log file.

    The generator's return value is the TornRecord that stopped the scan, or
    None if the data ended exactly on a record boundary.
    """
    pos = 0
    n = len(buf)
    while pos < n:
        rec = deserialize_record(buf, pos)
        if isinstance(rec, TornRecord):
            return rec
        yield pos, rec
        pos += rec.total_len
    return None


@dataclass
class Config:
    num_buffers: int = 2
    buffer_capacity: int = 30 * MiB
    io_unit_size: int = 16 * 1024
    flush_interval: float = 0.005
    half_full_threshold: float = 0.5
    segment_ring_size: int = 64
    checkpoint_threads: int = 2
    checkpoint_files_per_thread: int = 2
    log_rotate_bytes: int = 256 * MiB
    logger_poll: float = 0.0005

    def __post_init__(self) -> None:
        if self.num_buffers < 1:
            raise ConfigError("num_buffers must be >= 1")
        if self.segment_ring_size < 2:
            raise ConfigError("segment_ring_size must be >= 2")
        if self.io_unit_size <= 0 or self.buffer_capacity <= 0:
            raise ConfigError("sizes must be positive")
        if self.io_unit_size > self.buffer_capacity // self.segment_ring_size:
            raise ConfigError(
                f"io_unit_size {self.io_unit_size} exceeds buffer_capacity/segment_ring_size "
                f"({self.buffer_capacity // self.segment_ring_size})"
            )
        if not 0 < self.half_full_threshold <= 1:
            raise ConfigError("half_full_threshold must be in (0, 1]")
        if self.checkpoint_threads < 1 or self.checkpoint_files_per_thread < 1:
            raise ConfigError("checkpoint thread/file counts must be >= 1")
