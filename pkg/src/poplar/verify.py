"""Dependency checks over traces, and the crash-recovery oracle with its fuzz drivers.

Dependencies are rebuilt from the trace by matching the SSN a read observed
to the transaction that stamped it. Commit order uses a commit point per
transaction: the earlier of its acknowledgement and the first trace event at
which its record is recoverable (own-buffer DSN for write-only transactions,
minimum DSN over all buffers otherwise). Ties go to the lower SSN, and a
read-only transaction sorts after a writer with the same SSN.
"""
from __future__ import annotations

import bisect
import random
import re
from dataclasses import dataclass, field

from .checkpoint import CheckpointDaemon
from .core import Config, LogRecord, TornRecord, TxnClass, deserialize_record, serialize_record
from .device import CrashController, CrashPoint, MemoryStorage, Storage
from .engine import DeterministicScheduler, Engine, VirtualClock, initial_table
from .recovery import RecoveryPlan, recover, replay_logs
from .trace import ABORT, COMMIT, DURABLE, PRECOMMIT, READ, WRITE, ExecutionTrace
from .txn import STEP, Table


@dataclass
class Pass:
    def __bool__(self) -> bool:
        return True


@dataclass
class Violation:
    details: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return False


def _verdict(problems: list[str]) -> Pass | Violation:
    return Violation(problems) if problems else Pass()


# -- trace analysis --


@dataclass
class TxnInfo:
    id: int
    ssn: int = 0
    cls: TxnClass | None = None
    buffer: int = -1
    precommit_at: int = -1
    commit_at: int | None = None
    point: int | None = None

    @property
    def read_only(self) -> bool:
        return self.cls is TxnClass.READ_ONLY


@dataclass
class TraceAnalysis:
    txns: dict[int, TxnInfo]
    raw: list[tuple[int, int, int]]  # (writer, reader, key)
    waw: list[tuple[int, int, int]]  # (earlier writer, later writer, key)
    war: list[tuple[int, int, int]]  # (reader, later writer, key)
    order: dict[int, int]  # committed txn -> rank in commit order
    reads: list[tuple[int, int, int, int | None]]  # (txn, key, ssn, writer or None for base state)
    writes: list[tuple[int, int, int]]  # (txn, key, ssn) in execution order
    committed: set[int]


def _events(trace) -> tuple[list[tuple], int]:
    if isinstance(trace, ExecutionTrace):
        return trace.events, trace.num_buffers
    events, nb = trace
    return events, nb


def analyze(trace) -> TraceAnalysis:
    """Rebuild per-transaction info and dependency edges from a trace.

    ``trace`` is an ExecutionTrace or an ``(events, num_buffers)`` pair.
    """
    events, num_buffers = _events(trace)
    txns: dict[int, TxnInfo] = {}
    key_writes: dict[int, list[tuple[int, int, int]]] = {}  # key -> [(idx, txn, ssn)]
    by_key_ssn: dict[tuple[int, int], list[tuple[int, int]]] = {}
    read_evs = []
    writes = []
    dsn_steps: list[list[tuple[int, int]]] = [[] for _ in range(num_buffers)]
    min_steps: list[tuple[int, int]] = []
    dsn = [0] * num_buffers
    aborted = set()

    def info(tid):
        t = txns.get(tid)
        if t is None:
            t = txns[tid] = TxnInfo(tid)
        return t

    for idx, ev in enumerate(events):
        kind = ev[0]
        if kind == READ:
            read_evs.append((idx, ev[1], ev[2], ev[3]))
        elif kind == WRITE:
            _, tid, key, ssn = ev
            key_writes.setdefault(key, []).append((idx, tid, ssn))
            by_key_ssn.setdefault((key, ssn), []).append((idx, tid))
            writes.append((tid, key, ssn))
        elif kind == PRECOMMIT:
            t = info(ev[1])
            t.ssn, t.cls, t.buffer, t.precommit_at = ev[2], ev[3], ev[4], idx
        elif kind == COMMIT:
            info(ev[1]).commit_at = idx
        elif kind == DURABLE:
            b, d = ev[1], ev[2]
            if d > dsn[b]:
                dsn[b] = d
                dsn_steps[b].append((d, idx))
                low = min(dsn)
                if not min_steps or low > min_steps[-1][0]:
                    min_steps.append((low, idx))
        elif kind == ABORT:
            aborted.add(ev[1])

    # reads of aborted attempts carry no dependency
    read_evs = [r for r in read_evs if r[1] not in aborted and r[1] in txns]

    def first_reaching(steps, ssn):
        i = bisect.bisect_left(steps, (ssn, -1))
        return steps[i][1] if i < len(steps) else None

    for t in txns.values():
        if t.cls is TxnClass.WRITE_ONLY:
            reach = first_reaching(dsn_steps[t.buffer], t.ssn)
        elif t.ssn == 0:
            reach = t.precommit_at
        else:
            reach = first_reaching(min_steps, t.ssn)
        if reach is not None:
            reach = max(reach, t.precommit_at)
        cands = [p for p in (reach, t.commit_at) if p is not None]
        if t.commit_at is not None:
            t.point = min(cands)

    def writer_of(key, ssn, idx):
        cands = by_key_ssn.get((key, ssn))
        if not cands:
            return None
        best = None
        for widx, tid in cands:
            if widx < idx:
                best = tid
        return best if best is not None else cands[0][1]

    raw, war, reads = [], [], []
    for idx, tid, key, ssn in read_evs:
        w = writer_of(key, ssn, idx) if ssn else None
        reads.append((tid, key, ssn, w))
        if w is not None and w != tid:
            raw.append((w, tid, key))
        kw = key_writes.get(key, [])
        j = bisect.bisect_right(kw, (idx, float("inf"), 0))
        while j < len(kw) and kw[j][1] == tid:
            j += 1
        if j < len(kw):
            war.append((tid, kw[j][1], key))
    waw = []
    for key, kw in key_writes.items():
        for (_, a, _), (_, b, _) in zip(kw, kw[1:]):
            if a != b:
                waw.append((a, b, key))

    committed = {t.id for t in txns.values() if t.commit_at is not None}
    ranked = sorted(committed, key=lambda i: (txns[i].point, txns[i].ssn, txns[i].read_only, i))
    order = {tid: r for r, tid in enumerate(ranked)}
    return TraceAnalysis(txns, raw, waw, war, order, reads, writes, committed)


def _as_analysis(trace) -> TraceAnalysis:
    return trace if isinstance(trace, TraceAnalysis) else analyze(trace)


def _recoverability_problems(a: TraceAnalysis, limit: int) -> list[str]:
    out = []
    for w, r, key in a.raw:
        if r in a.order and (w not in a.order or a.order[w] > a.order[r]):
            out.append(f"RAW T{w}->T{r} on key {key}: reader committed before writer")
            if len(out) >= limit:
                return out
    for p, n, key in a.waw:
        if a.txns[p].ssn >= a.txns[n].ssn:
            out.append(f"WAW T{p}->T{n} on key {key}: ssn {a.txns[p].ssn} >= {a.txns[n].ssn}")
            if len(out) >= limit:
                return out
    return out


def check_recoverability(trace, limit: int = 20) -> Pass | Violation:
    """Committed readers commit after their writers; overwriters get larger SSNs."""
    return _verdict(_recoverability_problems(_as_analysis(trace), limit))


def _rigorousness_problems(a: TraceAnalysis, limit: int) -> list[str]:
    out = _recoverability_problems(a, limit)
    for name, edges in (("RAW", a.raw), ("WAW", a.waw), ("WAR", a.war)):
        for p, n, key in edges:
            if p not in a.order or n not in a.order:
                continue
            tp, tn = a.txns[p], a.txns[n]
            if a.order[p] > a.order[n]:
                out.append(f"{name} T{p}->T{n} on key {key}: commit order reversed")
            # a read-only successor carries its predecessor's ssn by construction
            elif tp.ssn > tn.ssn or (tp.ssn == tn.ssn and not tn.read_only):
                out.append(f"{name} T{p}->T{n} on key {key}: ssn {tp.ssn} !< {tn.ssn}")
            if len(out) >= limit:
                return out
    return out


def check_rigorousness(trace, limit: int = 20) -> Pass | Violation:
    """Every dependency pair agrees with both commit order and SSN order."""
    return _verdict(_rigorousness_problems(_as_analysis(trace), limit))


def check_sequentiality(trace, limit: int = 20) -> Pass | Violation:
    """Rigorous, and commit order matches strictly increasing SSN across all pairs."""
    a = _as_analysis(trace)
    out = _rigorousness_problems(a, limit)
    ranked = sorted(a.order, key=a.order.get)
    for x, y in zip(ranked, ranked[1:]):
        if len(out) >= limit:
            break
        if a.txns[x].ssn >= a.txns[y].ssn:
            out.append(f"T{x} (ssn {a.txns[x].ssn}) commits before T{y} (ssn {a.txns[y].ssn})")
    return _verdict(out)


# -- durable state and the consistency oracle --

_WAL = re.compile(r"wal-(\d+)-(\d+)\.log$")


@dataclass
class DurableLog:
    records: dict[int, LogRecord] = field(default_factory=dict)
    last_ssn: dict[int, int] = field(default_factory=dict)
    rsne: int = 0


def scan_durable(storage: Storage, num_buffers: int) -> DurableLog:
    """What survived on the log devices, read independently of the recovery code."""
    files: dict[int, list[tuple[int, str]]] = {b: [] for b in range(num_buffers)}
    for name in storage.names():
        if m := _WAL.match(name):
            files.setdefault(int(m.group(1)), []).append((int(m.group(2)), name))
    out = DurableLog()
    for b, lst in files.items():
        last = 0
        for _, name in sorted(lst):
            data = storage.read(name)
            pos = 0
            while pos < len(data):
                rec = deserialize_record(data, pos)
                if isinstance(rec, TornRecord):
                    break
                pos += rec.total_len
                last = rec.ssn
                if rec.txn_id:
                    out.records[rec.txn_id] = rec
        out.last_ssn[b] = last
    out.rsne = min(out.last_ssn.values(), default=0)
    return out


def expected_set(a: TraceAnalysis, durable: DurableLog, committed: set[int] | None = None) -> set[int]:
    """Transactions a correct recovery must reflect: committed ones plus durable
    records inside the replay rule (write-only, or SSN within the end bound)."""
    s = set(a.committed if committed is None else committed)
    for tid, rec in durable.records.items():
        if rec.write_only or rec.ssn <= durable.rsne:
            s.add(tid)
    return s


def consistency_oracle(recovered: Table, trace, committed: set[int] | None = None, *,
                       initial: dict[int, bytes], durable: DurableLog, limit: int = 20) -> Pass | Violation:
    """Recovered table must equal the initial state with the writes of the
    expected set applied in execution order, and that set must not contain a
    transaction that read from a transaction outside it."""
    a = _as_analysis(trace)
    committed = a.committed if committed is None else committed
    s = expected_set(a, durable, committed)
    problems = []
    for tid in sorted(committed):
        t = a.txns.get(tid)
        if t is not None and t.cls is not TxnClass.READ_ONLY and tid not in durable.records:
            problems.append(f"T{tid} committed but its log record is not durable")
    for tid, key, ssn, w in a.reads:
        if tid in s and w is not None and w != tid and w not in s:
            problems.append(f"T{tid} read key {key} from T{w}, which recovery does not reflect")
        if len(problems) >= limit:
            return Violation(problems)
    expect = dict(initial)
    for tid, key, _ in a.writes:
        if tid in s:
            rec = durable.records.get(tid)
            if rec is None:
                continue
            expect[key] = dict(rec.entries)[key]
    got = recovered.values()
    for key in sorted(set(expect) | set(got)):
        if expect.get(key) != got.get(key):
            problems.append(f"key {key}: recovered {got.get(key, b'')[:16]!r} expected {expect.get(key, b'')[:16]!r}")
            if len(problems) >= limit:
                break
    return _verdict(problems)


def check_recovery(engine: Engine, initial: dict[int, bytes], threads: int = 1) -> tuple[Pass | Violation, Table]:
    """Recover a copy of the engine's storage and judge it with the oracle."""
    storage = engine.storage.copy() if isinstance(engine.storage, MemoryStorage) else engine.storage
    nb = engine.config.num_buffers
    table, _, _ = recover(storage, threads, num_buffers=nb)
    verdict = consistency_oracle(table, engine.trace, initial=initial, durable=scan_durable(storage, nb))
    return verdict, table


# -- two-transaction dependency scenarios --

# T1 writes x; T2 reads x and z, writes y; T3 overwrites y; T4 overwrites z.
X, Y, Z = 0, 1, 2
_SCENARIO_OPS = {1: ((), (X,)), 2: ((X, Z), (Y,)), 3: ((), (Y,)), 4: ((), (Z,))}


@dataclass
class Scenario:
    name: str
    ssn: dict[int, int]
    commit_order: list[int]
    consistent: bool
    note: str = ""


DEPENDENCY_SCENARIOS = [
    Scenario("a", {1: 1, 2: 2, 3: 3, 4: 4}, [1, 2, 3, 4], True, "RAW: C1 before C2, L1 < L2"),
    Scenario("b", {1: 2, 2: 1, 3: 3, 4: 4}, [1, 2, 3, 4], True, "RAW: C1 before C2, L1 > L2"),
    Scenario("c", {1: 1, 2: 2, 3: 3, 4: 4}, [2, 1, 3, 4], False, "RAW: C2 before C1"),
    Scenario("d", {1: 1, 2: 2, 3: 3, 4: 4}, [1, 2, 3, 4], True, "WAW: C2 before C3, L2 < L3"),
    Scenario("e", {1: 1, 2: 3, 3: 2, 4: 4}, [1, 2, 3, 4], False, "WAW: L2 > L3"),
    Scenario("f", {1: 1, 2: 2, 3: 3, 4: 4}, [1, 3, 2, 4], True, "WAW: C3 before C2, L2 < L3"),
    Scenario("g", {1: 1, 2: 3, 3: 4, 4: 5}, [1, 2, 3, 4], True, "WAR: C2 before C4, L2 < L4"),
    Scenario("h", {1: 1, 2: 3, 3: 4, 4: 2}, [1, 4, 2, 3], True, "WAR: C4 before C2, L4 < L2"),
]


def _scenario_value(tid: int, key: int) -> bytes:
    return f"T{tid}:{key}".encode()


def run_scenario(sc: Scenario) -> tuple[Pass | Violation, list[tuple[int, Pass | Violation]]]:
    """Crash after every prefix of the commit order, then recover and judge the result.

    A transaction's record becomes durable when it commits. Recovery replays
    every durable record with last-writer-wins.
    """
    initial = {k: b"init" for k in (X, Y, Z)}
    events: list[tuple] = []
    # execution order: T1, T2, T3, T4; reads observe the writer's SSN
    last: dict[int, int] = {}
    for tid in (1, 2, 3, 4):
        reads, writes = _SCENARIO_OPS[tid]
        for k in reads:
            events.append((READ, tid, k, last.get(k, 0)))
        cls = TxnClass.HAS_READS if reads else TxnClass.WRITE_ONLY
        events.append((PRECOMMIT, tid, sc.ssn[tid], cls, 0))
        for k in writes:
            events.append((WRITE, tid, k, sc.ssn[tid]))
            last[k] = sc.ssn[tid]
    records = {tid: LogRecord(sc.ssn[tid], tid, not _SCENARIO_OPS[tid][0],
                              tuple((k, _scenario_value(tid, k)) for k in _SCENARIO_OPS[tid][1]))
               for tid in (1, 2, 3, 4)}
    per_point = []
    for k in range(len(sc.commit_order) + 1):
        done = sc.commit_order[:k]
        evs = events + [(COMMIT, t, sc.ssn[t]) for t in done]
        storage = MemoryStorage()
        for t in done:
            storage.append("wal-0-0.log", serialize_record(records[t]))
        table = Table(initial.items())
        top = max(sc.ssn.values())
        plan = RecoveryPlan(rsns=0, rsne=top, log_files={0: ["wal-0-0.log"] if done else []}, num_buffers=1)
        replay_logs(plan, storage, table)
        durable = DurableLog({t: records[t] for t in done}, {0: top}, top)
        per_point.append((k, consistency_oracle(table, (evs, 1), set(done), initial=initial, durable=durable)))
    bad = [f"crash after {k} commits: {v.details}" for k, v in per_point if not v]
    return _verdict(bad), per_point


def run_dependency_scenarios() -> dict[str, tuple[Scenario, Pass | Violation]]:
    return {sc.name: (sc, run_scenario(sc)[0]) for sc in DEPENDENCY_SCENARIOS}


# -- randomized crash fuzzing --


@dataclass
class FuzzCase:
    seed: int
    workers: int
    keys: int
    txns: int
    buffers: int
    capacity: int
    io_unit: int
    ring: int
    flush: float
    value_size: int
    fine_grained: bool
    checkpoint_after: int | None
    recovery_threads: int
    broken: tuple[str, ...] = ()
    rotate: int = 1 << 30


def make_case(seed: int, max_workers: int = 8, max_keys: int = 64, max_txns: int = 200,
              broken: tuple[str, ...] = ()) -> FuzzCase:
    rng = random.Random(seed)
    ring = rng.choice([4, 8, 16])
    io_unit = rng.choice([128, 256, 512, 1024])
    capacity = io_unit * ring * rng.choice([1, 2, 4])
    return FuzzCase(
        seed=seed,
        workers=rng.randint(1, max_workers),
        keys=rng.randint(2, max_keys),
        txns=rng.randint(1, max_txns),
        buffers=rng.randint(1, 4),
        capacity=capacity,
        io_unit=io_unit,
        ring=ring,
        flush=rng.choice([2e-4, 5e-4, 1e-3, 3e-3]),
        value_size=rng.choice([8, 16, 24, 40]),
        fine_grained=rng.random() < 0.7,
        checkpoint_after=rng.randint(0, 400) if rng.random() < 0.3 else None,
        recovery_threads=rng.choice([1, 2, 4, 8]),
        broken=broken,
        rotate=rng.choice([1 << 30, 2048, 8192]),
    )


def make_programs(rng: random.Random, workers: int, keys: int, txns: int) -> list[list[list[tuple]]]:
    """Random transaction programs over a small, skewed key space."""
    hot = max(1, keys // 4)

    def key():
        return rng.randrange(hot) if rng.random() < 0.5 else rng.randrange(keys)

    progs: list[list[list[tuple]]] = [[] for _ in range(workers)]
    for i in range(txns):
        r = rng.random()
        if r < 0.35:
            ops = [("w", key(), None) for _ in range(rng.randint(1, 3))]
        elif r < 0.75:
            ops = [("r", key()) for _ in range(rng.randint(1, 3))] + [("w", key(), None) for _ in range(rng.randint(1, 2))]
        elif r < 0.9:
            ops = [("r", key()) for _ in range(rng.randint(1, 3))]
        else:
            ops = [("scan", rng.randrange(keys), rng.randint(1, 4)), ("w", key(), None)]
        rng.shuffle(ops)
        progs[i % workers].append(ops)
    return progs


def _delayed(gen, wait: int):
    for _ in range(wait):
        yield STEP
    return (yield from gen)


def build_case(case: FuzzCase, crash: CrashController | None = None):
    cfg = Config(num_buffers=case.buffers, buffer_capacity=case.capacity, io_unit_size=case.io_unit,
                 segment_ring_size=case.ring, flush_interval=case.flush, checkpoint_threads=2,
                 checkpoint_files_per_thread=2, log_rotate_bytes=case.rotate)
    table = initial_table(case.keys, case.value_size)
    initial = table.values()
    engine = Engine(cfg, table, workers=case.workers, clock=VirtualClock(), crash=crash, trace=True,
                    broken=case.broken, value_size=case.value_size, fine_grained=case.fine_grained)
    sched = DeterministicScheduler(engine, seed=case.seed)
    sched.add_workers(make_programs(random.Random(case.seed ^ 0x5EED), case.workers, case.keys, case.txns))
    if case.checkpoint_after is not None:
        sched.spawn(_delayed(CheckpointDaemon(engine).steps(), case.checkpoint_after))
    return engine, sched, initial


@dataclass
class FuzzResult:
    seed: int
    ok: bool
    crash: str
    steps: int
    oracle: Pass | Violation
    recoverability: Pass | Violation
    dry_trace: ExecutionTrace | None = None

    @property
    def details(self) -> list[str]:
        return getattr(self.oracle, "details", []) + getattr(self.recoverability, "details", [])


def fuzz_one(case: FuzzCase, crash_mode: str = "random", keep_trace: bool = False) -> FuzzResult:
    """Dry run for the schedule length and trace checks, then crash and judge recovery."""
    engine, sched, initial = build_case(case)
    dry = sched.run()
    rec = check_recoverability(engine.trace)
    rng = random.Random(case.seed * 7919 + 1)
    if crash_mode == "random":
        crash_mode = rng.choices(["torn", "clean", "bytes"], [0.6, 0.2, 0.2])[0]
    crash = CrashController(seed=case.seed)
    if crash_mode == "bytes":
        b = rng.randrange(case.buffers)
        total = engine.devices[b].stats.bytes
        n = rng.randint(0, max(total, 1))
        crash = CrashController([CrashPoint(device=f"log{b}", after_bytes=n)], seed=case.seed)
        label, at = f"log{b} after {n} bytes", None
    else:
        at = rng.randrange(max(dry.steps, 1))
        label = f"event {at} ({crash_mode})"
    engine2, sched2, _ = build_case(case, crash)
    sched2.run(crash_at=at, tear=crash_mode != "clean")
    verdict, _ = check_recovery(engine2, initial, case.recovery_threads)
    return FuzzResult(case.seed, bool(verdict) and bool(rec), label, dry.steps, verdict, rec,
                      engine.trace if keep_trace else None)


def fuzz_all_points(case: FuzzCase) -> list[FuzzResult]:
    """Crash the case at every scheduler event, once cleanly and once torn."""
    engine, sched, initial = build_case(case)
    dry = sched.run()
    rec = check_recoverability(engine.trace)
    out = []
    for at in range(dry.steps + 1):
        for tear in (False, True):
            engine2, sched2, _ = build_case(case, CrashController(seed=case.seed + at))
            sched2.run(crash_at=at, tear=tear)
            verdict, _ = check_recovery(engine2, initial, case.recovery_threads)
            label = f"event {at} ({'torn' if tear else 'clean'})"
            out.append(FuzzResult(case.seed, bool(verdict) and bool(rec), label, dry.steps, verdict, rec))
    return out


def fuzz(seeds, broken: tuple[str, ...] = (), **limits) -> list[FuzzResult]:
    return [fuzz_one(make_case(s, broken=broken, **limits)) for s in seeds]


# -- exhaustive boundary crashes --

# Ten transactions covering every dependency shape; keys x..w are 0..3.
BOUNDARY_SCRIPT = [
    [("w", 0, None)],
    [("r", 0), ("r", 2), ("w", 1, None)],
    [("w", 1, None)],
    [("w", 2, None)],
    [("r", 1), ("w", 3, None)],
    [("w", 0, None), ("w", 1, None)],
    [("r", 3)],
    [("r", 2), ("w", 0, None)],
    [("w", 2, None)],
    [("r", 0), ("r", 1), ("w", 3, None)],
]


def boundary_case(seed: int, workers: int = 4, buffers: int = 2) -> FuzzCase:
    return FuzzCase(seed=seed, workers=workers, keys=4, txns=len(BOUNDARY_SCRIPT), buffers=buffers,
                    capacity=2048, io_unit=128, ring=8, flush=5e-4, value_size=16, fine_grained=True,
                    checkpoint_after=None, recovery_threads=1)


def _build_boundary(case: FuzzCase, crash=None):
    cfg = Config(num_buffers=case.buffers, buffer_capacity=case.capacity, io_unit_size=case.io_unit,
                 segment_ring_size=case.ring, flush_interval=case.flush)
    table = initial_table(case.keys, case.value_size)
    initial = table.values()
    engine = Engine(cfg, table, workers=case.workers, clock=VirtualClock(), crash=crash, trace=True,
                    value_size=case.value_size, fine_grained=True)
    progs = [BOUNDARY_SCRIPT[w::case.workers] for w in range(case.workers)]
    sched = DeterministicScheduler(engine, seed=case.seed)
    sched.add_workers(progs)
    return engine, sched, initial


def boundary_points(case: FuzzCase) -> tuple[list[int], dict[str, list[int]]]:
    """Scheduler steps that hit a record/flush/commit boundary, plus record
    byte offsets on each log device."""
    engine, sched, _ = _build_boundary(case)
    steps = []
    seen = [0]

    def on_step(i):
        evs = engine.trace.events
        if any(e[0] in (PRECOMMIT, DURABLE, COMMIT) for e in evs[seen[0]:]):
            steps.append(i - 1)
        seen[0] = len(evs)

    sched.run(on_step=on_step)
    offsets = {}
    for b in range(case.buffers):
        data = b"".join(engine.storage.read(n) for n in sorted(
            (n for n in engine.storage.names() if n.startswith(f"wal-{b}-")),
            key=lambda n: int(n.rsplit("-", 1)[1][:-4])))
        offs, pos = [0], 0
        while pos < len(data):
            rec = deserialize_record(data, pos)
            if isinstance(rec, TornRecord):
                break
            pos += rec.total_len
            offs.append(pos)
        offsets[f"log{b}"] = offs
    return steps, offsets


def exhaustive_boundaries(seed: int = 0, workers: int = 4, buffers: int = 2) -> list[tuple[str, Pass | Violation]]:
    case = boundary_case(seed, workers, buffers)
    steps, offsets = boundary_points(case)
    runs: list[tuple[str, dict]] = []
    for s in steps:
        runs.append((f"before event {s}", dict(crash_at=s, tear=False)))
        runs.append((f"after event {s}", dict(crash_at=s + 1, tear=False)))
        runs.append((f"torn at event {s}", dict(crash_at=s, tear=True)))
    out = []
    for label, kw in runs:
        engine, sched, initial = _build_boundary(case, CrashController(seed=seed))
        sched.run(**kw)
        out.append((label, check_recovery(engine, initial)[0]))
    for dev, offs in offsets.items():
        for o in offs:
            for n in (o, o + 1):
                crash = CrashController([CrashPoint(device=dev, after_bytes=n)])
                engine, sched, initial = _build_boundary(case, crash)
                sched.run()
                out.append((f"{dev} after {n} bytes", check_recovery(engine, initial)[0]))
    return out
