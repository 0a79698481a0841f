import pytest

from poplar.checkpoint import (
    CheckpointDaemon,
    CheckpointMetadata,
    CheckpointStatus,
    decode_file,
    decode_metadata,
    encode_file,
    encode_metadata,
    list_metadata,
    run_checkpoint,
    validate_checkpoint,
)
from poplar.core import ChecksumMismatch, Config, CorruptMetadata
from poplar.device import CrashController
from poplar.engine import Engine, VirtualClock, initial_table, run_threaded
from poplar.recovery import recover
from poplar.txn import drive


def engine(keys=40, workers=2, **kw):
    cfg = Config(num_buffers=2, buffer_capacity=8192, io_unit_size=256, segment_ring_size=8, flush_interval=1e-3,
                 checkpoint_threads=2, checkpoint_files_per_thread=2)
    return Engine(cfg, initial_table(keys, 16), workers=workers, value_size=16, **kw)


@pytest.mark.parametrize("observed,csn,want", [
    ([41, 10], 42, CheckpointStatus.VALID),
    ([42], 42, CheckpointStatus.NOT_YET),
    ([0, 0], 0, CheckpointStatus.VALID),
    ([5], 0, CheckpointStatus.NOT_YET),
])
def test_validate_checkpoint(observed, csn, want):
    assert validate_checkpoint(CheckpointMetadata(1, 0, [], observed), csn) is want


def test_metadata_round_trip_and_corruption():
    meta = CheckpointMetadata(3, 17, ["a", "bb"], [4, 9], CheckpointStatus.VALID)
    raw = encode_metadata(meta)
    assert decode_metadata(raw) == meta
    for i in range(len(raw)):
        bad = bytearray(raw)
        bad[i] ^= 0x40
        with pytest.raises(CorruptMetadata):
            decode_metadata(bytes(bad))
    with pytest.raises(CorruptMetadata):
        decode_metadata(raw[:10])


def test_file_round_trip_and_corruption():
    rows = [(1, 0, b"a"), (2, 7, b"bcd")]
    raw = encode_file(1, 0, 0, rows)
    assert decode_file(raw) == rows
    with pytest.raises(ChecksumMismatch):
        decode_file(raw[:-1] + bytes([raw[-1] ^ 1]))


def test_quiescent_checkpoint_covers_each_key_once():
    e = engine()
    run_threaded(e, [[[("w", k, None)] for k in range(w, 40, 2)] for w in range(2)])
    meta = run_checkpoint(e, 2, 2, quiescent=True)
    assert meta.status is CheckpointStatus.VALID and len(meta.files) == 4
    rows = [r for name in meta.files for r in decode_file(e.storage.read(name))]
    assert sorted(k for k, _, _ in rows) == list(range(40))
    assert {k: (s, v) for k, s, v in rows} == e.table.snapshot()
    assert meta.rsn <= e.csn and max(meta.max_observed) == e.table.max_ssn() < e.csn
    on_disk = decode_metadata(e.storage.read(meta.name))
    assert on_disk.status is CheckpointStatus.VALID and list_metadata(e.storage) == [1]


def test_initial_state_checkpoint_is_valid_immediately():
    e = engine()
    meta = run_checkpoint(e, quiescent=True)
    assert meta.max_observed == [0, 0] and meta.status is CheckpointStatus.VALID


def test_epochs_increase():
    e = engine()
    assert [run_checkpoint(e, quiescent=True).epoch for _ in range(3)] == [1, 2, 3]
    assert list_metadata(e.storage) == [3, 2, 1]


def test_dirty_elr_value_waits_for_durability():
    """A scan may copy a value that is stamped but not yet durable; the
    checkpoint must not become valid until the CSN passes it."""
    crash = CrashController()
    e = engine(clock=VirtualClock(), crash=crash)
    w = e.workers[0]
    t = drive(w.run_txn([("w", 3, b"dirty-dirty-1234")]))
    assert e.buffers[0].dsn == 0 and e.table[3].version[0] == t.ssn
    d = CheckpointDaemon(e, 1, 1)
    d.begin()
    drive(d.scan_partition(0))
    assert d.meta.max_observed == [t.ssn]
    fin = d.finish()
    assert next(fin) == "blocked"
    assert validate_checkpoint(d.meta, e.csn) is CheckpointStatus.NOT_YET
    # crash before the record is durable: the checkpoint is unusable
    crash.crash()
    table, plan, _ = recover(e.storage.copy(), num_buffers=2)
    assert plan.checkpoint is None and table[3].version[0] == 0


def test_dirty_value_checkpoint_validates_after_flush():
    e = engine(clock=VirtualClock())
    w = e.workers[0]
    t = drive(w.run_txn([("w", 3, b"dirty-dirty-1234")]))
    d = CheckpointDaemon(e, 1, 1)
    d.begin()
    drive(d.scan_partition(0))
    meta = drive(d.finish(pump=e.flush_all), idle=lambda: None)
    assert meta.status is CheckpointStatus.VALID and e.csn > t.ssn
    table, plan, _ = recover(e.storage.copy(), num_buffers=2)
    assert plan.rsns == meta.rsn and table[3].version == (t.ssn, b"dirty-dirty-1234")


def test_corrupt_checkpoint_file_fails_recovery():
    e = engine()
    meta = run_checkpoint(e, quiescent=True)
    s = e.storage
    data = bytearray(s.read(meta.files[1]))
    data[30] ^= 0xFF
    s.write(meta.files[1], bytes(data))
    with pytest.raises(ChecksumMismatch):
        recover(s)
