"""Instrumented runtime assertions with global check/trip counters."""
from __future__ import annotations

from collections import Counter

checks: Counter[str] = Counter()
trips: Counter[str] = Counter()


class InvariantViolation(AssertionError):
    pass


def check(name: str, cond: bool, detail: str = "") -> None:
    checks[name] += 1
    if not cond:
        trips[name] += 1
        raise InvariantViolation(f"{name}: {detail}")


def reset() -> None:
    checks.clear()
    trips.clear()


def total_trips() -> int:
    return sum(trips.values())
