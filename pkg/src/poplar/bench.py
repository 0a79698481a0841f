"""Benchmark workloads and metrics, including the centralized-logging baseline."""
from __future__ import annotations

import enum
import json
import logging
import random
import statistics
from dataclasses import asdict, dataclass, field

from .core import Config, ConfigError
from .device import SIM_BANDWIDTH, SIM_LATENCY, CrashController, DeviceKind, Storage
from .engine import Engine, initial_table, run_threaded
from .txn import Table

log = logging.getLogger(__name__)


class WorkloadKind(enum.Enum):
    YCSB_WRITE = "ycsb-write"
    YCSB_HYBRID = "ycsb-hybrid"
    ORDER_ENTRY = "order-entry"


@dataclass
class WorkloadSpec:
    kind: WorkloadKind = WorkloadKind.YCSB_WRITE
    record_count: int = 100_000
    value_size: int = 1000
    scan_length: int = 10
    txn_count: int = 100_000
    worker_threads: int = 4
    writes_per_txn: int = 1
    think_time: float = 0.0  # per-worker pause between transactions
    seed: int = 0


def load_database(spec: WorkloadSpec) -> Table:
    """Keys 0..record_count-1, deterministic values, every SSN 0."""
    try:
        return initial_table(spec.record_count, spec.value_size)
    except MemoryError as e:
        need = spec.record_count * (spec.value_size + 120)
        raise MemoryError(f"loading {spec.record_count} records needs roughly {need / 2**20:.0f} MiB; "
                          f"lower --records or the value size") from e


def _order_entry_layout(n: int):
    warehouses = max(1, n // 2000)
    districts = warehouses * 10
    rest = max(2, n - warehouses - districts)
    cust_lo = warehouses + districts
    stock_lo = cust_lo + rest // 2
    return warehouses, districts, cust_lo, stock_lo, n


def generate_programs(spec: WorkloadSpec) -> list[list[list[tuple]]]:
    """Per-worker transaction programs for the whole run (uniform keys)."""
    rng = random.Random(spec.seed)
    n = spec.record_count
    workers = max(1, spec.worker_threads)
    progs: list[list[list[tuple]]] = [[] for _ in range(workers)]
    kind = spec.kind
    if kind is WorkloadKind.ORDER_ENTRY:
        if n < 16:
            raise ConfigError("order-entry needs at least 16 records")
        wh, dist, cust_lo, stock_lo, end = _order_entry_layout(n)
    for i in range(spec.txn_count):
        if kind is WorkloadKind.YCSB_WRITE:
            ops = [("w", rng.randrange(n), None) for _ in range(spec.writes_per_txn)]
        elif kind is WorkloadKind.YCSB_HYBRID:
            ops = [("w", rng.randrange(n), None), ("scan", rng.randrange(n), spec.scan_length)]
        else:
            w = rng.randrange(wh)
            d = wh + w * 10 + rng.randrange(10)
            if rng.random() < 0.5:  # payment
                c = rng.randrange(cust_lo, stock_lo)
                ops = [("r", w), ("w", w, None), ("r", d), ("w", d, None), ("r", c), ("w", c, None)]
            else:  # new order
                ops = [("r", w), ("r", d), ("w", d, None)]
                for s in rng.sample(range(stock_lo, end), min(rng.randint(5, 15), end - stock_lo)):
                    ops += [("r", s), ("w", s, None)]
        progs[i % workers].append(ops)
    return progs


class CentralSequencer:
    """Baseline LSN source: one counter bumped under the single buffer's latch.

    Transaction dependencies are ignored; every record simply takes the next
    number, so LSN order is the global byte order of the one log.
    """

    def __init__(self, start: int = 0) -> None:
        self.lsn = start

    def __call__(self, txn, buffer, record_len: int, base: int = 0):
        with buffer.latch:
            offset, slot = buffer._reserve(record_len)
            # heartbeats may have moved the buffer past the counter
            self.lsn = max(self.lsn, buffer.ssn) + 1
            buffer.ssn = self.lsn
            buffer._account(slot, record_len)
            lsn = self.lsn
        if txn is not None:
            txn.ssn = lsn
        return lsn, offset, slot


@dataclass
class BenchReport:
    workload: str
    variant: str
    buffers: int
    workers: int
    txns: int
    committed: int = 0
    aborts: int = 0
    elapsed_s: float = 0.0
    throughput: float = 0.0
    steady_throughput: float = 0.0
    latency_mean_ms: float = 0.0
    latency_p99_ms: float = 0.0
    latency_max_ms: float = 0.0
    e2e_mean_ms: float = 0.0
    e2e_p99_ms: float = 0.0
    device_mb_s: list[float] = field(default_factory=list)
    device_util: list[float] = field(default_factory=list)
    device_max_write_ms: float = 0.0
    breakdown: dict[str, float] = field(default_factory=dict)
    bound: str = "cpu"
    crashed: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _p99(xs: list[float]) -> float:
    if not xs:
        return 0.0
    s = sorted(xs)
    return s[min(len(s) - 1, int(0.99 * len(s)))]


def _steady(times: list[float]) -> float:
    """Commit rate between the 10th and 90th percentile commit instants."""
    if len(times) < 10:
        return 0.0
    t = sorted(times)
    lo, hi = len(t) // 10, len(t) * 9 // 10
    span = t[hi] - t[lo]
    return (hi - lo) / span if span > 0 else 0.0


def run_benchmark(spec: WorkloadSpec, config: Config | None = None, *, devices: str = "sim",
                  bandwidth: float = SIM_BANDWIDTH, latency: float = SIM_LATENCY, centralized: bool = False,
                  storage: Storage | None = None, out: str | None = None, table: Table | None = None,
                  crash: CrashController | None = None) -> BenchReport:
    config = config or Config()
    if spec.worker_threads < 1:
        raise ConfigError("need at least one worker thread")
    kind = DeviceKind.REAL if devices == "real" else DeviceKind.SIMULATED
    if devices not in ("sim", "real"):
        raise ConfigError(f"unknown device kind {devices!r}")
    report = BenchReport(spec.kind.value, "centr" if centralized else "poplar", config.num_buffers,
                         spec.worker_threads, spec.txn_count)
    if spec.txn_count <= 0:
        _emit(report, out)
        return report
    programs = generate_programs(spec)
    table = table if table is not None else load_database(spec)
    engine = Engine(config, table, storage, workers=spec.worker_threads, device_kind=kind, bandwidth=bandwidth,
                    latency=latency, centralized=centralized, value_size=spec.value_size,
                    record_count=spec.record_count, think_time=spec.think_time, crash=crash)
    res = run_threaded(engine, programs)
    report.crashed = res.crashed
    stats = [w.stats for w in engine.workers]
    lat = [x for s in stats for x in s.latencies]
    e2e = [x for s in stats for x in s.e2e]
    elapsed = res.elapsed
    report.committed = sum(s.commits for s in stats)
    report.aborts = sum(s.aborts for s in stats)
    report.elapsed_s = elapsed
    report.throughput = report.committed / elapsed if elapsed else 0.0
    report.steady_throughput = _steady([t for s in stats for t in s.commit_times])
    if lat:
        report.latency_mean_ms = statistics.fmean(lat) * 1e3
        report.latency_p99_ms = _p99(lat) * 1e3
        report.latency_max_ms = max(lat) * 1e3
        report.e2e_mean_ms = statistics.fmean(e2e) * 1e3
        report.e2e_p99_ms = _p99(e2e) * 1e3
    report.device_mb_s = [d.stats.bytes / elapsed / 1e6 for d in engine.devices]
    report.device_util = [min(1.0, d.stats.busy / elapsed) for d in engine.devices]
    report.device_max_write_ms = max(d.stats.max_write for d in engine.devices) * 1e3
    total = elapsed * len(stats)
    contention = sum(s.log_contention for s in stats)
    work = sum(s.log_work for s in stats)
    report.breakdown = {"log_contention": contention / total, "log_work": work / total,
                        "other": max(0.0, 1 - (contention + work) / total)}
    report.bound = "device" if min(report.device_util) >= 0.8 else "cpu"
    _emit(report, out)
    return report


def run_baseline_centr(spec: WorkloadSpec, config: Config | None = None, **kwargs) -> BenchReport:
    """Single buffer, single device, counter LSNs, total-order commit."""
    config = config or Config(num_buffers=1)
    if config.num_buffers != 1:
        raise ConfigError("the centralized baseline uses exactly one buffer and one device")
    return run_benchmark(spec, config, centralized=True, **kwargs)


def _emit(report: BenchReport, out: str | None) -> None:
    if out:
        with open(out, "a") as f:
            f.write(report.to_json() + "\n")


def format_report(r: BenchReport) -> str:
    rows = [
        ("workload", f"{r.workload} ({r.variant}, {r.buffers} buffer(s), {r.workers} worker(s))"),
        ("committed", f"{r.committed} of {r.txns} ({r.aborts} aborts retried)"),
        ("elapsed", f"{r.elapsed_s:.3f} s"),
        ("throughput", f"{r.throughput:,.0f} txn/s (steady {r.steady_throughput:,.0f})"),
        ("commit latency", f"mean {r.latency_mean_ms:.3f} ms, p99 {r.latency_p99_ms:.3f} ms, max {r.latency_max_ms:.3f} ms"),
        ("end-to-end", f"mean {r.e2e_mean_ms:.3f} ms, p99 {r.e2e_p99_ms:.3f} ms"),
        ("device MB/s", ", ".join(f"{x:.2f}" for x in r.device_mb_s) or "-"),
        ("device util", ", ".join(f"{x:.0%}" for x in r.device_util) or "-"),
        ("breakdown", ", ".join(f"{k} {v:.1%}" for k, v in r.breakdown.items()) or "-"),
        ("bound", r.bound),
    ]
    if r.crashed:
        rows.append(("crashed", "yes (injected); run `poplar recover` on the data directory"))
    w = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{w}}  {v}" for k, v in rows)
