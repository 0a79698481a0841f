"""In-memory transactional key-value engine with parallel decentralized logging."""
from .core import (
    BufferFull,
    ChecksumMismatch,
    Config,
    ConfigError,
    CorruptMetadata,
    DeviceError,
    InjectedCrash,
    KeyNotFound,
    LogRecord,
    PoplarError,
    RingFull,
    TornRecord,
    Transaction,
    TxnClass,
    TxnState,
    deserialize_record,
    serialize_record,
)
from .device import CrashController, DeviceKind, DirectoryStorage, MemoryStorage
from .engine import DeterministicScheduler, Engine, VirtualClock, initial_table, run_threaded

__version__ = "0.1.0"
