import struct
import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poplar.core import (
    HEADER_SIZE,
    TRAILER_SIZE,
    Config,
    ConfigError,
    LogRecord,
    TornRecord,
    Transaction,
    TupleHeader,
    TxnClass,
    deserialize_record,
    iter_records,
    record_size,
    serialize_record,
)

entries_st = st.lists(st.tuples(st.integers(0, 2**64 - 1), st.binary(max_size=64)), max_size=6)
record_st = st.builds(LogRecord, st.integers(1, 2**64 - 1), st.integers(0, 2**64 - 1), st.booleans(),
                      entries_st.map(tuple))


def test_empty_record_is_header_only():
    data = serialize_record(LogRecord(1, 9, False, ()))
    assert len(data) == HEADER_SIZE + TRAILER_SIZE == 30
    assert deserialize_record(data) == LogRecord(1, 9, False, ())


def test_three_entries_length_by_field_count():
    entries = ((1, b"a" * 100), (2, b"b" * 150), (3, b"c" * 50))
    rec = LogRecord(5, 1, True, entries)
    # magic 1 + flags 1 + count 4 + total_len 4 + ssn 8 + txn 8, per entry key 8 + len 4, crc 4
    expected = (1 + 1 + 4 + 4 + 8 + 8) + 3 * (8 + 4) + 300 + 4
    assert rec.total_len == expected == len(serialize_record(rec)) == 366


def test_wire_layout_is_little_endian_and_checksummed():
    rec = LogRecord(0x0102, 7, True, ((42, b"xy"),))
    data = serialize_record(rec)
    assert data[0] == 0xA5 and data[1] == 1
    assert struct.unpack_from("<IIQQ", data, 2) == (1, len(data), 0x0102, 7)
    assert struct.unpack_from("<QI", data, 26) == (42, 2)
    assert data[38:40] == b"xy"
    assert struct.unpack_from("<I", data, len(data) - 4)[0] == zlib.crc32(data[:-4]) == rec.checksum


@settings(max_examples=200)
@given(record_st)
def test_round_trip(rec):
    data = serialize_record(rec)
    assert deserialize_record(data) == rec
    assert rec.entry_count == len(rec.entries)
    assert rec.total_len == len(data) == record_size(rec.entries)


@settings(max_examples=50)
@given(record_st, st.data())
def test_every_strict_prefix_is_torn(rec, data):
    raw = serialize_record(rec)
    cut = data.draw(st.integers(0, len(raw) - 1))
    assert isinstance(deserialize_record(raw[:cut]), TornRecord)


def test_truncated_by_one_byte_is_torn():
    raw = serialize_record(LogRecord(3, 1, False, ((1, b"v" * 20),)))
    assert isinstance(deserialize_record(raw[:-1]), TornRecord)


def test_every_single_byte_flip_fails():
    raw = serialize_record(LogRecord(77, 5, False, ((1, b"hello"), (2, b"world!"))))
    for i in range(len(raw)):
        for bit in (0x01, 0x80):
            bad = bytearray(raw)
            bad[i] ^= bit
            assert isinstance(deserialize_record(bytes(bad)), TornRecord), i


def test_iter_records_stops_at_torn_tail():
    recs = [LogRecord(i, i, True, ((i, bytes([i]) * i),)) for i in range(1, 5)]
    blob = b"".join(serialize_record(r) for r in recs)
    it = iter_records(blob[:-3])
    got = []
    with pytest.raises(StopIteration) as stop:
        while True:
            got.append(next(it)[1])
    assert got == recs[:3]
    assert isinstance(stop.value.value, TornRecord)
    assert list(r for _, r in iter_records(blob)) == recs


def test_offset_decoding():
    a = serialize_record(LogRecord(1, 1, True, ((1, b"a"),)))
    b = LogRecord(2, 2, False, ((2, b"b"),))
    assert deserialize_record(a + serialize_record(b), len(a)) == b


def test_config_defaults_and_ring_fit():
    c = Config()
    assert (c.buffer_capacity, c.io_unit_size, c.flush_interval, c.half_full_threshold) == (30 << 20, 16384, 0.005, 0.5)
    with pytest.raises(ConfigError):
        Config(buffer_capacity=1 << 20, io_unit_size=32768, segment_ring_size=64)
    Config(buffer_capacity=1 << 20, io_unit_size=16384, segment_ring_size=64)


def test_txn_class():
    t = Transaction(1, 0, 0)
    assert t.txn_class is TxnClass.READ_ONLY
    t.write_set[1] = b"x"
    assert t.txn_class is TxnClass.WRITE_ONLY
    t.read_set[2] = 0
    assert t.txn_class is TxnClass.HAS_READS


def test_tuple_lock_single_owner():
    t = TupleHeader(1, b"v")
    assert t.ssn == 0 and t.value == b"v"
    assert t.try_lock(5)
    assert not t.try_lock(6)
    assert t.locked_by_other(6) and not t.locked_by_other(5)
    t.unlock()
    assert t.try_lock(6)
    t.unlock()
