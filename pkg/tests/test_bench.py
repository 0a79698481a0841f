import json

import pytest

from poplar.bench import (
    BenchReport,
    CentralSequencer,
    WorkloadKind,
    WorkloadSpec,
    format_report,
    generate_programs,
    load_database,
    run_baseline_centr,
    run_benchmark,
)
from poplar.core import Config, ConfigError
from poplar.engine import DeterministicScheduler, Engine, VirtualClock, initial_table
from poplar.wal import LogBuffer


def test_load_database():
    t = load_database(WorkloadSpec(record_count=100, value_size=32))
    assert len(t) == 100 and t.keys() == list(range(100))
    assert all(len(v) == 32 for v in t.values().values()) and t.max_ssn() == 0


def test_programs_are_deterministic_and_shaped():
    spec = WorkloadSpec(WorkloadKind.YCSB_HYBRID, record_count=50, txn_count=20, worker_threads=3, scan_length=4)
    p = generate_programs(spec)
    assert p == generate_programs(spec)
    assert [len(x) for x in p] == [7, 7, 6]
    assert all(ops[0][0] == "w" and ops[1] == ("scan", ops[1][1], 4) for w in p for ops in w)


def test_order_entry_touches_warehouse_then_district():
    p = generate_programs(WorkloadSpec(WorkloadKind.ORDER_ENTRY, record_count=100, txn_count=30, worker_threads=1))
    for ops in p[0]:
        assert ops[0] == ("r", 0)
        assert sum(op[0] == "w" for op in ops) >= 1
    with pytest.raises(ConfigError):
        generate_programs(WorkloadSpec(WorkloadKind.ORDER_ENTRY, record_count=8, txn_count=1))


def test_zero_transactions():
    r = run_benchmark(WorkloadSpec(txn_count=0, record_count=10))
    assert r.committed == 0 and r.throughput == 0.0


def test_centr_rejects_multiple_devices():
    with pytest.raises(ConfigError):
        run_baseline_centr(WorkloadSpec(txn_count=10, record_count=10), Config(num_buffers=2))


def test_central_sequencer_is_total_order():
    cfg = Config(num_buffers=1)
    buf = LogBuffer(0, cfg)
    seq = CentralSequencer()
    assert [seq(None, buf, 40)[0] for _ in range(5)] == [1, 2, 3, 4, 5]
    buf.ssn = 9  # a heartbeat moved the buffer
    assert seq(None, buf, 40)[0] == 10


def test_run_benchmark_reports(tmp_path):
    spec = WorkloadSpec(record_count=200, value_size=64, txn_count=400, worker_threads=2)
    out = tmp_path / "r.jsonl"
    r = run_benchmark(spec, Config(num_buffers=2), out=str(out))
    assert r.committed == 400 and r.throughput > 0 and len(r.device_util) == 2
    assert r.latency_max_ms >= r.latency_p99_ms >= 0 and abs(sum(r.breakdown.values()) - 1) < 1e-6
    assert json.loads(out.read_text())["committed"] == 400
    assert "throughput" in format_report(r)


def test_centr_and_single_buffer_poplar_are_close():
    spec = WorkloadSpec(record_count=2000, value_size=1000, txn_count=4000, worker_threads=4)
    kw = dict(bandwidth=8e6, latency=20e-6)
    c = run_baseline_centr(spec, Config(num_buffers=1), **kw)
    p = run_benchmark(spec, Config(num_buffers=1), **kw)
    assert c.committed == p.committed == 4000
    assert abs(p.throughput - c.throughput) / c.throughput < 0.15


def _committed_set(seed):
    spec = WorkloadSpec(record_count=64, value_size=16, txn_count=120, worker_threads=4, seed=seed)
    e = Engine(Config(num_buffers=2, flush_interval=1e-3), initial_table(64, 16), workers=4, clock=VirtualClock(),
               value_size=16, commit_log=True)
    s = DeterministicScheduler(e, seed=seed)
    s.add_workers(generate_programs(spec))
    s.run()
    return e.commit_log.entries, e.table.to_bytes()


def test_deterministic_runs_repeat():
    assert _committed_set(5) == _committed_set(5)
    assert _committed_set(5) != _committed_set(6)


def test_report_json_round_trip():
    r = BenchReport("ycsb-write", "poplar", 2, 4, 10, committed=10)
    assert json.loads(r.to_json())["variant"] == "poplar"
