"""Storage and the devices that write to it.

``Storage`` is the thing that survives a crash (a directory, or a dict of
byte arrays for simulated runs). A ``Device`` is the write path onto it that
one logger or checkpoint thread owns.
"""
from __future__ import annotations

import enum
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .core import DeviceError, InjectedCrash

SIM_BANDWIDTH = 1.2e9
SIM_LATENCY = 21.5e-6


class Storage:
    def names(self) -> list[str]:
        raise NotImplementedError

    def read(self, name: str) -> bytes:
        raise NotImplementedError

    def append(self, name: str, data: bytes) -> None:
        raise NotImplementedError

    def write(self, name: str, data: bytes) -> None:
        raise NotImplementedError

    def rename(self, src: str, dst: str) -> None:
        raise NotImplementedError

    def remove(self, name: str) -> None:
        raise NotImplementedError

    def size(self, name: str) -> int:
        return len(self.read(name))

    def exists(self, name: str) -> bool:
        return name in self.names()

    def write_atomic(self, name: str, data: bytes) -> None:
        tmp = name + ".tmp"
        self.write(tmp, data)
        self.rename(tmp, name)


class MemoryStorage(Storage):
    def __init__(self) -> None:
        self.files: dict[str, bytearray] = {}
        self._lock = threading.Lock()

    def names(self) -> list[str]:
        with self._lock:
            return sorted(self.files)

    def read(self, name: str) -> bytes:
        with self._lock:
            try:
                return bytes(self.files[name])
            except KeyError:
                raise FileNotFoundError(name) from None

    def append(self, name: str, data: bytes) -> None:
        with self._lock:
            self.files.setdefault(name, bytearray()).extend(data)

    def write(self, name: str, data: bytes) -> None:
        with self._lock:
            self.files[name] = bytearray(data)

    def rename(self, src: str, dst: str) -> None:
        with self._lock:
            self.files[dst] = self.files.pop(src)

    def remove(self, name: str) -> None:
        with self._lock:
            self.files.pop(name, None)

    def size(self, name: str) -> int:
        with self._lock:
            return len(self.files.get(name, b""))

    def copy(self) -> "MemoryStorage":
        out = MemoryStorage()
        with self._lock:
            out.files = {k: bytearray(v) for k, v in self.files.items()}
        return out

    def dump(self, path: str | os.PathLike) -> None:
        p = Path(path)
        p.mkdir(parents=True, exist_ok=True)
        for name, data in self.files.items():
            (p / name).write_bytes(bytes(data))


class DirectoryStorage(Storage):
    def __init__(self, path: str | os.PathLike) -> None:
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)

    def names(self) -> list[str]:
        return sorted(p.name for p in self.path.iterdir() if p.is_file())

    def read(self, name: str) -> bytes:
        return (self.path / name).read_bytes()

    def append(self, name: str, data: bytes) -> None:
        with open(self.path / name, "ab") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())

    def write(self, name: str, data: bytes) -> None:
        with open(self.path / name, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())

    def rename(self, src: str, dst: str) -> None:
        os.replace(self.path / src, self.path / dst)
        fd = os.open(self.path, os.O_RDONLY)
        try:
            os.fsync(fd)
        finally:
            os.close(fd)

    def remove(self, name: str) -> None:
        try:
            os.remove(self.path / name)
        except FileNotFoundError:
            pass

    def size(self, name: str) -> int:
        try:
            return (self.path / name).stat().st_size
        except FileNotFoundError:
            return 0

    def exists(self, name: str) -> bool:
        return (self.path / name).exists()


class RealClock:
    now = staticmethod(time.monotonic)
    sleep = staticmethod(time.sleep)


@dataclass
class CrashPoint:
    event: int | None = None
    device: str | None = None
    after_bytes: int | None = None


_AFTER_RE = re.compile(r"crash\s+after\s+(\d+)\s+bytes\s+on\s+(\S+)$")
_EVENT_RE = re.compile(r"crash\s+at\s+event\s+(\d+)$")


def parse_crash_script(text: str) -> list[CrashPoint]:
    points = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := _AFTER_RE.match(line):
            points.append(CrashPoint(device=m.group(2), after_bytes=int(m.group(1))))
        elif m := _EVENT_RE.match(line):
            points.append(CrashPoint(event=int(m.group(1))))
        else:
            raise ValueError(f"crash script line {lineno}: cannot parse {raw!r}")
    return points


class CrashController:
    """Shared crash state for every device of one engine instance.

    Byte-addressed points tear the write that crosses the limit exactly at
    the limit. ``arm()`` makes the next write anywhere persist a uniformly
    random prefix of itself before crashing.
    """

    def __init__(self, points: list[CrashPoint] | None = None, seed: int = 0) -> None:
        self.crashed = False
        self.armed = False
        self.rng = random.Random(seed)
        self.byte_limits: dict[str, int] = {}
        self.event_points = []
        for p in points or []:
            if p.after_bytes is not None:
                self.byte_limits[p.device] = p.after_bytes
            elif p.event is not None:
                self.event_points.append(p.event)
        self.lock = threading.Lock()
        self.listeners = []

    def arm(self) -> None:
        self.armed = True

    def crash(self) -> None:
        with self.lock:
            first = not self.crashed
            self.crashed = True
        if first:
            for cb in self.listeners:
                cb()

    def admit(self, device: str, written: int, n: int) -> int:
        """How many of ``n`` bytes may be written; a short count means crash."""
        if self.crashed:
            return 0
        if self.armed:
            return self.rng.randrange(0, n) if n else 0
        limit = self.byte_limits.get(device)
        if limit is not None and written + n > limit:
            return max(0, limit - written)
        return n


class DeviceKind(enum.Enum):
    REAL = "real"
    SIMULATED = "sim"


@dataclass
class DeviceStats:
    bytes: int = 0
    writes: int = 0
    busy: float = 0.0
    max_write: float = 0.0
    intervals: list = field(default_factory=list)


class Device:
    """Append-and-sync write path owned by a single thread.

    Log devices append to ``<prefix><seq>.log`` files and rotate once the
    current file reaches ``rotate_bytes``. Simulated devices pace writes so
    that each takes ``latency + nbytes / bandwidth`` back to back.
    """

    def __init__(
        self,
        name: str,
        storage: Storage,
        kind: DeviceKind = DeviceKind.SIMULATED,
        bandwidth: float = SIM_BANDWIDTH,
        latency: float = SIM_LATENCY,
        crash: CrashController | None = None,
        clock=RealClock,
        prefix: str | None = None,
        rotate_bytes: int = 256 << 20,
        record_intervals: bool = False,
    ) -> None:
        self.name = name
        self.storage = storage
        self.kind = kind
        self.bandwidth = bandwidth
        self.latency = latency
        self.crash = crash or CrashController()
        self.clock = clock
        self.prefix = prefix
        self.rotate_bytes = rotate_bytes
        self.stats = DeviceStats()
        self.record_intervals = record_intervals
        self._busy_until = 0.0
        self._written = 0
        self._seq = 0
        self._cur_size = 0
        if prefix is not None:
            seqs = [int(n[len(prefix):-4]) for n in storage.names()
                    if n.startswith(prefix) and n.endswith(".log") and n[len(prefix):-4].isdigit()]
            if seqs:
                self._seq = max(seqs) + 1

    def modeled_time(self, nbytes: int) -> float:
        return self.latency + nbytes / self.bandwidth

    @property
    def current_file(self) -> str:
        return f"{self.prefix}{self._seq}.log"

    def _pace(self, nbytes: int, started: float) -> None:
        if self.kind is not DeviceKind.SIMULATED:
            # real devices: account the measured write+sync time
            took = time.perf_counter() - started
            self.stats.busy += took
            self.stats.max_write = max(self.stats.max_write, took)
            return
        now = self.clock.now()
        start = max(now, self._busy_until)
        end = start + self.modeled_time(nbytes)
        self._busy_until = end
        self.stats.busy += end - start
        self.stats.max_write = max(self.stats.max_write, end - start)
        if self.record_intervals:
            self.stats.intervals.append((start, end, nbytes))
        if end > now:
            self.clock.sleep(end - now)

    def _admit(self, data: bytes) -> bytes:
        n = self.crash.admit(self.name, self._written, len(data))
        return data if n == len(data) else data[:n]

    def append_and_sync(self, data: bytes) -> int:
        """Append to the current log file and return once it is durable."""
        if self.prefix is None:
            raise DeviceError(f"device {self.name} has no log file prefix")
        if self._cur_size and self._cur_size + len(data) > self.rotate_bytes:
            self._seq += 1
            self._cur_size = 0
        part = self._admit(data)
        t0 = time.perf_counter()
        try:
            if part:
                self.storage.append(self.current_file, part)
        except OSError as e:
            raise DeviceError(f"{self.name}: {e}") from e
        self._written += len(part)
        self._cur_size += len(part)
        if len(part) < len(data):
            self.crash.crash()
            raise InjectedCrash(f"{self.name}: crashed after {self._written} bytes")
        self._pace(len(data), t0)
        self.stats.bytes += len(data)
        self.stats.writes += 1
        return len(data)

    def write_file(self, name: str, data: bytes, atomic: bool = False) -> int:
        part = self._admit(data)
        t0 = time.perf_counter()
        try:
            if len(part) < len(data):
                if part and not atomic:
                    self.storage.write(name, part)
                self._written += len(part)
                self.crash.crash()
                raise InjectedCrash(f"{self.name}: crashed writing {name}")
            if atomic:
                self.storage.write_atomic(name, data)
            else:
                self.storage.write(name, data)
        except OSError as e:
            raise DeviceError(f"{self.name}: {e}") from e
        self._written += len(data)
        self._pace(len(data), t0)
        self.stats.bytes += len(data)
        self.stats.writes += 1
        return len(data)
