"""Log buffers with segment-based hole tracking, and the loggers that flush them."""
from __future__ import annotations

import enum
import threading

from . import invariants
from .core import BufferFull, Config, ConfigError, LogRecord, RingFull, record_size, serialize_record
from .device import Device
from .sequence import BufferSsnState, allocate_ssn


class SegStat(enum.Enum):
    OPEN = 0
    CLOSED = 1


class Trigger(enum.Enum):
    SIZE_REACHED = "size"
    TIMER_EXPIRED = "timer"


class Segment:
    __slots__ = ("ssn", "allocated_bytes", "buffered_bytes", "start_offset", "stat")

    def __init__(self, start_offset: int = 0) -> None:
        self.ssn = 0
        self.allocated_bytes = 0
        self.buffered_bytes = 0
        self.start_offset = start_offset
        self.stat = SegStat.OPEN

    def reset(self) -> None:
        self.ssn = 0
        self.allocated_bytes = 0
        self.buffered_bytes = 0
        self.stat = SegStat.OPEN

    @property
    def flushable(self) -> bool:
        return self.stat is SegStat.CLOSED and self.allocated_bytes == self.buffered_bytes

    def __repr__(self) -> str:
        return (f"Segment(ssn={self.ssn}, alloc={self.allocated_bytes}, buf={self.buffered_bytes}, "
                f"start={self.start_offset}, {self.stat.name})")


class SegmentIndex:
    def __init__(self, size: int) -> None:
        self.segments = [Segment() for _ in range(size)]
        self.cur_generate_seg = 0
        self.cur_flush_seg = 0

    @property
    def size(self) -> int:
        return len(self.segments)

    def __getitem__(self, seq: int) -> Segment:
        return self.segments[seq % len(self.segments)]

    @property
    def generating(self) -> Segment:
        return self[self.cur_generate_seg]

    def free_closes(self) -> int:
        """How many more segments may close before the ring is full."""
        return self.size - 1 - (self.cur_generate_seg - self.cur_flush_seg)


class LogBuffer(BufferSsnState):
    """A byte ring holding one buffer's unflushed records, with its segment index and DSN.

    Offsets are logical (monotone); the physical position is offset modulo
    capacity. Segments never straddle the physical end of the ring, so each
    flush is one contiguous write.
    """

    def __init__(self, buffer_id: int, config: Config, start_ssn: int = 0) -> None:
        super().__init__(ssn=start_ssn)
        self.id = buffer_id
        self.capacity = config.buffer_capacity
        self.io_unit = config.io_unit_size
        self.data = bytearray(self.capacity)
        self.index = SegmentIndex(config.segment_ring_size)
        self.dsn = start_ssn
        self.flushed_offset = 0
        self._fill_lock = threading.Lock()
        self.trace = None

    # -- reservation hooks, called by allocate_ssn with the latch held --

    def _close_locked(self) -> None:
        idx = self.index
        seg = idx.generating
        seg.ssn = self.ssn
        seg.stat = SegStat.CLOSED
        idx[idx.cur_generate_seg + 1].start_offset = self.offset
        idx.cur_generate_seg += 1

    def _reserve(self, record_len: int):
        if record_len > self.capacity:
            raise ConfigError(f"record of {record_len} B exceeds buffer capacity {self.capacity}")
        idx = self.index
        seg = idx.generating
        phys = self.offset % self.capacity
        wrap = phys + record_len > self.capacity
        # the previous record ended exactly at the physical end: the segment
        # must close there too, or it would straddle the ring boundary
        at_end = phys == 0 and seg.allocated_bytes > 0
        oversize = record_len > self.io_unit
        if wrap or at_end or oversize:
            need = (1 if seg.allocated_bytes else 0) + (1 if oversize else 0)
            if idx.free_closes() < need:
                raise RingFull(f"buffer {self.id}")
            pad = self.capacity - phys if wrap else 0
            if self.offset + pad + record_len - self.flushed_offset > self.capacity:
                raise BufferFull(f"buffer {self.id}")
            if seg.allocated_bytes:
                self._close_locked()
                seg = idx.generating
            if pad:
                self.offset += pad
                seg.start_offset = self.offset
        elif self.offset + record_len - self.flushed_offset > self.capacity:
            raise BufferFull(f"buffer {self.id}")
        return self.offset, idx.cur_generate_seg

    def _account(self, slot, record_len: int) -> None:
        seg = self.index[slot]
        seg.allocated_bytes += record_len
        self.offset += record_len
        if seg.allocated_bytes >= self.io_unit and self.index.free_closes() >= 1:
            self._close_locked()

    # -- prepare stage --

    def insert_record(self, offset: int, slot: int, data: bytes) -> None:
        """Copy a serialized record into its reserved slot and credit the segment."""
        phys = offset % self.capacity
        self.data[phys:phys + len(data)] = data
        with self._fill_lock:
            self.index[slot].buffered_bytes += len(data)

    def establish_segment(self, trigger: Trigger) -> bool:
        """Close the generating segment if it is non-empty; False if nothing closed."""
        with self.latch:
            seg = self.index.generating
            if seg.stat is SegStat.CLOSED or seg.allocated_bytes == 0:
                return False
            if trigger is Trigger.SIZE_REACHED and seg.allocated_bytes < self.io_unit:
                return False
            if self.index.free_closes() < 1:
                raise RingFull(f"buffer {self.id}")
            self._close_locked()
            return True

    @property
    def unflushed_bytes(self) -> int:
        return self.offset - self.flushed_offset

    def idle(self) -> bool:
        idx = self.index
        return idx.cur_flush_seg == idx.cur_generate_seg and idx.generating.allocated_bytes == 0


def append_heartbeat(buffer: LogBuffer, target_ssn: int) -> bool:
    """Append an empty record carrying ``target_ssn`` and close its segment.

    Lets an idle buffer's DSN catch up with the others so the global CSN can
    move. Returns False if the buffer is already at or past ``target_ssn`` or
    has no room right now.
    """
    if buffer.ssn >= target_ssn:
        return False
    rec_len = record_size(())
    try:
        ssn, offset, slot = allocate_ssn(None, buffer, rec_len, target_ssn - 1)
    except (BufferFull, RingFull):
        return False
    buffer.insert_record(offset, slot, serialize_record(LogRecord(ssn, 0, False, ())))
    try:
        buffer.establish_segment(Trigger.TIMER_EXPIRED)
    except RingFull:
        pass
    return True


class Logger:
    """Group-commit flusher bound to one buffer and one device."""

    def __init__(self, buffer: LogBuffer, device: Device, coordinator, config: Config, clock) -> None:
        self.buffer = buffer
        self.device = device
        self.coordinator = coordinator
        self.config = config
        self.clock = clock
        self.last_flush = clock.now()
        self.flushed_bytes = 0
        self.trace = None

    @property
    def wait_time(self) -> float:
        return self.clock.now() - self.last_flush

    def advance_dsn(self) -> int:
        """Flush closed, hole-free segments in ring order and publish the DSN.

        Physically adjacent flushable segments go out as one device write;
        the DSN then jumps to the last one's SSN. The CSN is refreshed after
        every write so commits trickle out during a long backlog.
        """
        buf = self.buffer
        idx = buf.index
        cap = buf.capacity
        flushed = 0
        while True:
            head = idx[idx.cur_flush_seg]
            if not head.flushable:
                break
            batch = [head]
            end = head.start_offset + head.allocated_bytes
            while len(batch) < idx.size - 1:
                nxt = idx[idx.cur_flush_seg + len(batch)]
                if not nxt.flushable or nxt.start_offset != end or end % cap == 0:
                    break
                batch.append(nxt)
                end += nxt.allocated_bytes
            phys = head.start_offset % cap
            n = end - head.start_offset
            invariants.check("flush_contiguous", phys + n <= cap, f"{phys}+{n} > {cap}")
            self.device.append_and_sync(bytes(buf.data[phys:phys + n]))
            last = buf.dsn
            for seg in batch:
                invariants.check("flush_gate", seg.stat is SegStat.CLOSED and seg.allocated_bytes == seg.buffered_bytes)
                invariants.check("dsn_monotone", seg.ssn >= last, f"{seg.ssn} < {last}")
                last = seg.ssn
            if self.trace is not None:
                self.trace.durable(buf.id, last)
            buf.dsn = last
            buf.flushed_offset = end
            for seg in batch:
                seg.reset()
            idx.cur_flush_seg += len(batch)
            flushed += n
            self.coordinator.advance_csn()
        self.flushed_bytes += flushed
        return flushed

    def step(self) -> bool:
        """One poll of the logger loop; returns True if a group flush ran."""
        buf = self.buffer
        due = (self.wait_time >= self.config.flush_interval
               or buf.unflushed_bytes >= self.config.half_full_threshold * buf.capacity)
        if not due:
            return False
        self.last_flush = self.clock.now()
        try:
            buf.establish_segment(Trigger.TIMER_EXPIRED)
        except RingFull:
            pass
        self.advance_dsn()
        self.coordinator.advance_csn()
        target = self.coordinator.heartbeat_target()
        if target > buf.ssn and append_heartbeat(buf, target):
            self.advance_dsn()
            self.coordinator.advance_csn()
        return True
