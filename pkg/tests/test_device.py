import pytest

from poplar.core import InjectedCrash, LogRecord, TornRecord, deserialize_record, iter_records, serialize_record
from poplar.device import (
    CrashController,
    CrashPoint,
    Device,
    DeviceKind,
    DirectoryStorage,
    MemoryStorage,
    parse_crash_script,
)
from poplar.engine import VirtualClock


def dev(storage=None, **kw):
    return Device("log0", storage or MemoryStorage(), prefix="wal-0-", clock=VirtualClock(), **kw)


def test_modeled_time_16k():
    d = dev()
    assert d.modeled_time(16384) == pytest.approx(16384 / 1.2e9 + 21.5e-6)
    assert d.modeled_time(16384) == pytest.approx(35.15e-6, abs=0.01e-6)


def test_append_paces_back_to_back():
    d = dev()
    d.append_and_sync(b"x" * 16384)
    d.append_and_sync(b"x" * 16384)
    assert d.clock.now() == pytest.approx(2 * d.modeled_time(16384))
    assert d.stats.bytes == 32768 and d.stats.writes == 2


def test_bandwidth_cap_over_windows():
    d = dev(bandwidth=10e6, latency=0, record_intervals=True)
    for i in range(400):
        d.append_and_sync(b"z" * (1000 + 37 * (i % 50)))
    ivs = d.stats.intervals
    end = ivs[-1][1]
    t = 0.0
    while t + 0.1 <= end:
        # bytes whose transfer overlaps the window, prorated
        got = sum(n * max(0.0, min(e, t + 0.1) - max(s, t)) / (e - s) for s, e, n in ivs)
        assert got <= 1.05 * 10e6 * 0.1
        t += 0.01


def test_crash_after_bytes_tears_record():
    recs = [serialize_record(LogRecord(i, i, True, ((i, b"v" * 40),))) for i in (1, 2)]
    k = len(recs[0]) + 10
    crash = CrashController([CrashPoint(device="log0", after_bytes=k)])
    d = dev(crash=crash)
    d.append_and_sync(recs[0])
    with pytest.raises(InjectedCrash):
        d.append_and_sync(recs[1])
    data = d.storage.read("wal-0-0.log")
    assert len(data) == k
    assert deserialize_record(data) == deserialize_record(recs[0])
    assert isinstance(deserialize_record(data, len(recs[0])), TornRecord)
    assert crash.crashed


def test_two_appends_crash_between():
    crash = CrashController()
    d = dev(crash=crash)
    first = serialize_record(LogRecord(1, 1, True, ((1, b"a"),)))
    d.append_and_sync(first)
    crash.crash()
    with pytest.raises(InjectedCrash):
        d.append_and_sync(serialize_record(LogRecord(2, 2, True, ((2, b"b"),))))
    assert d.storage.read("wal-0-0.log") == first


def test_armed_crash_persists_strict_prefix():
    for seed in range(20):
        crash = CrashController(seed=seed)
        d = dev(crash=crash)
        crash.arm()
        with pytest.raises(InjectedCrash):
            d.append_and_sync(b"q" * 100)
        assert len(d.storage.read("wal-0-0.log") if d.storage.exists("wal-0-0.log") else b"") < 100


def test_rotation_and_resume_numbering():
    s = MemoryStorage()
    d = dev(s, rotate_bytes=100)
    for _ in range(5):
        d.append_and_sync(b"x" * 60)
    assert sorted(s.names()) == [f"wal-0-{i}.log" for i in range(5)]
    d2 = dev(s)
    d2.append_and_sync(b"y")
    assert "wal-0-5.log" in s.names()


def test_parse_crash_script():
    pts = parse_crash_script("# comment\ncrash after 100 bytes on log1\n\ncrash at event 42\n")
    assert pts == [CrashPoint(device="log1", after_bytes=100), CrashPoint(event=42)]
    with pytest.raises(ValueError):
        parse_crash_script("crash sometime")
    c = CrashController(pts)
    assert c.byte_limits == {"log1": 100} and c.event_points == [42]


def test_directory_storage(tmp_path):
    s = DirectoryStorage(tmp_path)
    d = Device("log0", s, kind=DeviceKind.REAL, prefix="wal-0-")
    rec = serialize_record(LogRecord(1, 1, True, ((1, b"disk"),)))
    d.append_and_sync(rec)
    s.write_atomic("meta", b"abc")
    assert [r for _, r in iter_records(s.read("wal-0-0.log"))] == [deserialize_record(rec)]
    assert s.read("meta") == b"abc" and not s.exists("meta.tmp")
    assert d.stats.busy > 0
