"""Engine assembly and the two drivers: real threads and a seeded interleaver."""
from __future__ import annotations

import dataclasses
import itertools
import json
import random
import struct
import sys
import threading
import time
from dataclasses import dataclass, field

from .commit import CommitCoordinator, CommitLog
from .core import Config, ConfigError, InjectedCrash
from .device import SIM_BANDWIDTH, SIM_LATENCY, CrashController, Device, DeviceKind, MemoryStorage, RealClock, Storage
from .sequence import allocate_ssn
from .trace import ExecutionTrace
from .txn import BLOCKED, Table, Worker
from .wal import LogBuffer, Logger

MANIFEST = "poplar.json"


def initial_value(key: int, size: int) -> bytes:
    head = struct.pack("<Q", key)
    return (head * (size // 8 + 1))[:size]


def initial_table(record_count: int, value_size: int) -> Table:
    return Table((k, initial_value(k, value_size)) for k in range(record_count))


def write_manifest(storage: Storage, **fields) -> None:
    storage.write_atomic(MANIFEST, json.dumps(fields, sort_keys=True).encode())


def read_manifest(storage: Storage) -> dict:
    try:
        return json.loads(storage.read(MANIFEST))
    except FileNotFoundError:
        return {}


class VirtualClock:
    def __init__(self, start: float = 0.0) -> None:
        self.t = start

    def now(self) -> float:
        return self.t

    def sleep(self, dt: float) -> None:
        if dt > 0:
            self.t += dt

    advance = sleep


class Engine:
    """One database instance with all of its parts wired together."""

    def __init__(
        self,
        config: Config,
        table: Table,
        storage: Storage | None = None,
        *,
        workers: int = 1,
        clock=RealClock,
        device_kind: DeviceKind = DeviceKind.SIMULATED,
        bandwidth: float = SIM_BANDWIDTH,
        latency: float = SIM_LATENCY,
        crash: CrashController | None = None,
        trace: bool = False,
        centralized: bool = False,
        broken: tuple[str, ...] | frozenset = (),
        start_ssn: int = 0,
        value_size: int = 100,
        record_count: int | None = None,
        fine_grained: bool = False,
        commit_log: bool = False,
        record_intervals: bool = False,
        think_time: float = 0.0,
    ) -> None:
        if centralized and config.num_buffers != 1:
            raise ConfigError("centralized logging uses exactly one buffer and one device")
        unknown = set(broken) - {"skip_durability", "skip_waw"}
        if unknown:
            raise ConfigError(f"unknown broken modes {sorted(unknown)}")
        self.config = config
        self.table = table
        self.storage = storage if storage is not None else MemoryStorage()
        self.clock = clock
        self.crash = crash or CrashController()
        self.centralized = centralized
        self.skip_durability = "skip_durability" in broken
        self.skip_waw = "skip_waw" in broken
        self.fine_grained = fine_grained
        self.think_time = think_time
        self.value_size = value_size
        self.txn_ids = itertools.count(1)
        self.trace = ExecutionTrace(config.num_buffers) if trace else None
        self.commit_log = CommitLog() if commit_log else None
        self.errors: list[BaseException] = []
        self._stop = False
        self.recovery_plan = None
        self.recovery_stats = None
        if self.trace is not None:
            self.crash.listeners.append(self.trace.seal)

        self.buffers = [LogBuffer(i, config, start_ssn) for i in range(config.num_buffers)]
        self.coordinator = CommitCoordinator(self.buffers, start_ssn)
        self.coordinator.trace = self.trace
        self.devices = [
            Device(f"log{i}", self.storage, device_kind, bandwidth, latency, self.crash, clock,
                   prefix=f"wal-{i}-", rotate_bytes=config.log_rotate_bytes, record_intervals=record_intervals)
            for i in range(config.num_buffers)
        ]
        self.loggers = [Logger(b, d, self.coordinator, config, clock) for b, d in zip(self.buffers, self.devices)]
        for lg in self.loggers:
            lg.trace = self.trace
        if centralized:
            from .bench import CentralSequencer

            self.allocate = CentralSequencer(start_ssn)
        else:
            self.allocate = allocate_ssn
        self.workers = [Worker(w, self, self.buffers[w % config.num_buffers]) for w in range(workers)]
        self.device_kind = device_kind
        self.bandwidth = bandwidth
        self.latency = latency
        write_manifest(self.storage, num_buffers=config.num_buffers,
                       record_count=record_count if record_count is not None else len(table),
                       value_size=value_size)

    @classmethod
    def open(cls, storage: Storage, config: Config | None = None, *, threads: int = 1,
             checkpoint: bool = True, **kwargs) -> "Engine":
        """Recover the database held in ``storage`` and build an engine on top.

        Buffer SSNs restart above everything seen in the logs and checkpoint.
        With ``checkpoint=True`` a checkpoint of the recovered state is taken
        before returning, so records skipped by this recovery can never fall
        inside the replay window of a later one.
        """
        from .checkpoint import run_checkpoint
        from .recovery import recover

        manifest = read_manifest(storage)
        config = config or Config()
        if manifest.get("num_buffers") and manifest["num_buffers"] != config.num_buffers:
            config = dataclasses.replace(config, num_buffers=manifest["num_buffers"])
        table, plan, stats = recover(storage, threads, num_buffers=config.num_buffers)
        reseed = max(stats.max_ssn, table.max_ssn(), plan.rsns)
        kwargs.setdefault("value_size", manifest.get("value_size", 100))
        kwargs.setdefault("record_count", manifest.get("record_count", len(table)))
        engine = cls(config, table, storage, start_ssn=reseed, **kwargs)
        engine.recovery_plan = plan
        engine.recovery_stats = stats
        if checkpoint:
            run_checkpoint(engine, quiescent=True)
        return engine

    @property
    def halted(self) -> bool:
        return self._stop or self.crash.crashed

    @property
    def csn(self) -> int:
        return self.coordinator.csn

    def make_value(self, txn_id: int, key: int) -> bytes:
        head = struct.pack("<QQ", txn_id, key)
        size = max(self.value_size, len(head))
        return (head * (size // len(head) + 1))[:size]

    def stop(self) -> None:
        self._stop = True

    def pending(self) -> int:
        return sum(len(w.queues) for w in self.workers)

    def flush_all(self) -> None:
        """Force every buffer durable and advance the CSN (single-threaded use)."""
        for lg in self.loggers:
            lg.last_flush = -1e18
            lg.step()
        for lg in self.loggers:
            lg.last_flush = -1e18
            lg.step()


# -- real threads --


@dataclass
class RunResult:
    elapsed: float = 0.0
    crashed: bool = False
    steps: int = 0
    crash_step: int | None = None
    errors: list = field(default_factory=list)


def _guard(engine: Engine, fn):
    def target():
        try:
            fn()
        except InjectedCrash:
            engine.crash.crash()
        except BaseException as e:  # noqa: BLE001 - surfaced to the caller after join
            engine.errors.append(e)
            engine.stop()
    return target


def run_threaded(engine: Engine, programs, extra=(), idle_sleep: float = 5e-5,
                 switch_interval: float | None = 5e-4) -> RunResult:
    """Run one program list per worker on real threads until drained.

    ``extra`` are additional step generators (e.g. a checkpoint daemon) run on
    their own threads alongside the workers.
    """
    if len(programs) != len(engine.workers):
        raise ValueError("need one program list per worker")
    old_switch = sys.getswitchinterval()
    if switch_interval is not None:
        sys.setswitchinterval(switch_interval)
    stop_loggers = threading.Event()

    def idle():
        time.sleep(idle_sleep)

    def run_gen(gen):
        def body():
            for signal in gen:
                if engine.halted:
                    return
                if signal is BLOCKED:
                    idle()
        return body

    def logger_loop(lg):
        def body():
            poll = engine.config.logger_poll
            while not stop_loggers.is_set() and not engine.halted:
                lg.step()
                time.sleep(poll)
        return body

    t0 = time.perf_counter()
    loggers = [threading.Thread(target=_guard(engine, logger_loop(lg)), daemon=True) for lg in engine.loggers]
    workers = [threading.Thread(target=_guard(engine, run_gen(w.run(p))), daemon=True)
               for w, p in zip(engine.workers, programs)]
    others = [threading.Thread(target=_guard(engine, run_gen(g)), daemon=True) for g in extra]
    try:
        for t in loggers + workers + others:
            t.start()
        for t in workers + others:
            t.join()
        stop_loggers.set()
        for t in loggers:
            t.join()
    finally:
        sys.setswitchinterval(old_switch)
    res = RunResult(elapsed=time.perf_counter() - t0, crashed=engine.crash.crashed, errors=list(engine.errors))
    if engine.errors:
        raise engine.errors[0]
    return res


# -- deterministic interleaving --


class DeterministicScheduler:
    """Single-threaded, seeded interleaving of every actor's steps.

    Each call to an actor's ``next`` is one global event. A crash at event
    ``k`` arms the devices so that a write inside that step persists a random
    prefix, then freezes everything after the step.
    """

    def __init__(self, engine: Engine, seed: int = 0, tick: float = 5e-5, logger_weight: float = 0.15) -> None:
        if not isinstance(engine.clock, VirtualClock):
            raise ConfigError("deterministic runs need an engine built with a VirtualClock")
        self.engine = engine
        self.rng = random.Random(seed)
        self.tick = tick
        self.logger_weight = logger_weight
        self.actors: list = []
        self.loggers = [self._logger_actor(lg) for lg in engine.loggers]
        self.steps = 0

    @staticmethod
    def _logger_actor(lg):
        while True:
            lg.step()
            yield None

    def spawn(self, gen) -> None:
        self.actors.append(gen)

    def add_workers(self, programs) -> None:
        for w, p in zip(self.engine.workers, programs):
            self.spawn(w.run(p))

    def run(self, crash_at: int | None = None, max_steps: int = 50_000_000, on_step=None,
            tear: bool = True) -> RunResult:
        """Interleave until every actor finishes or the crash fires.

        With ``tear=False`` the crash happens just before event ``crash_at``
        runs, so nothing in flight is torn.
        """
        engine = self.engine
        rng = self.rng
        res = RunResult()
        actors = self.actors
        while actors:
            if self.steps >= max_steps:
                raise RuntimeError(f"deterministic run did not finish in {max_steps} steps")
            crashing = crash_at is not None and self.steps >= crash_at
            if crashing and not tear:
                engine.crash.crash()
                res.crashed = True
                res.crash_step = self.steps
                break
            if crashing:
                engine.crash.arm()
            if rng.random() < self.logger_weight:
                gen, i = rng.choice(self.loggers), None
            else:
                i = rng.randrange(len(actors))
                gen = actors[i]
            try:
                next(gen)
            except StopIteration:
                actors[i] = actors[-1]
                actors.pop()
            except InjectedCrash:
                crashing = True
            self.steps += 1
            engine.clock.advance(self.tick)
            if on_step is not None:
                on_step(self.steps)
            if crashing or engine.crash.crashed:
                engine.crash.crash()
                res.crashed = True
                res.crash_step = self.steps - 1
                break
        res.steps = self.steps
        return res
