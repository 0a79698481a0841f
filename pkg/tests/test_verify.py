import pytest

from poplar.core import TxnClass
from poplar.trace import COMMIT, CSN, DURABLE, PRECOMMIT, READ, WRITE
from poplar.verify import (
    DEPENDENCY_SCENARIOS,
    analyze,
    boundary_case,
    check_recoverability,
    check_rigorousness,
    check_sequentiality,
    exhaustive_boundaries,
    fuzz_one,
    make_case,
    run_dependency_scenarios,
)

WO, HR, RO = TxnClass.WRITE_ONLY, TxnClass.HAS_READS, TxnClass.READ_ONLY


def test_dependency_scenario_marks():
    got = {name: bool(v) for name, (_, v) in run_dependency_scenarios().items()}
    assert got == {sc.name: sc.consistent for sc in DEPENDENCY_SCENARIOS}
    assert [n for n, ok in sorted(got.items()) if not ok] == ["c", "e"]


def raw_history(commit_order, ssn1=1, ssn2=2):
    ev = [(PRECOMMIT, 1, ssn1, WO, 0), (WRITE, 1, 0, ssn1), (READ, 2, 0, ssn1), (PRECOMMIT, 2, ssn2, HR, 0),
          (WRITE, 2, 1, ssn2)]
    ev += [(COMMIT, t, {1: ssn1, 2: ssn2}[t]) for t in commit_order]
    return ev, 1


def test_raw_edge_detected():
    a = analyze(raw_history([1, 2]))
    assert a.raw == [(1, 2, 0)] and a.order == {1: 0, 2: 1}


def test_reader_before_writer_not_recoverable():
    assert check_recoverability(raw_history([1, 2]))
    v = check_recoverability(raw_history([2, 1]))
    assert not v and "RAW T1->T2" in v.details[0]


def test_waw_needs_increasing_ssn():
    ev = [(PRECOMMIT, 1, 5, WO, 0), (WRITE, 1, 0, 5), (PRECOMMIT, 2, 4, WO, 1), (WRITE, 2, 0, 4),
          (COMMIT, 1, 5), (COMMIT, 2, 4)]
    v = check_recoverability((ev, 2))
    assert not v and "WAW" in v.details[0]


def test_rigorousness_war_reversed():
    # T1 reads x, T2 overwrites x; T2 commits first with a smaller SSN
    ev = [(READ, 1, 0, 0), (PRECOMMIT, 2, 1, WO, 0), (WRITE, 2, 0, 1), (PRECOMMIT, 1, 2, HR, 1), (WRITE, 1, 1, 2),
          (COMMIT, 2, 1), (COMMIT, 1, 2)]
    assert check_recoverability((ev, 2))
    v = check_rigorousness((ev, 2))
    assert not v and "WAR" in v.details[0]


def test_read_only_successor_may_share_ssn():
    ev = [(PRECOMMIT, 1, 3, WO, 0), (WRITE, 1, 0, 3), (READ, 2, 0, 3), (PRECOMMIT, 2, 3, RO, -1),
          (DURABLE, 0, 3), (CSN, 3), (COMMIT, 1, 3), (COMMIT, 2, 3)]
    assert check_rigorousness((ev, 1))
    assert not check_sequentiality((ev, 1))  # equal SSNs are not strictly increasing


def test_sequentiality_vs_rigorousness():
    # independent transactions on two buffers commit out of SSN order
    ev = [(PRECOMMIT, 1, 5, WO, 0), (WRITE, 1, 0, 5), (PRECOMMIT, 2, 2, WO, 1), (WRITE, 2, 1, 2),
          (DURABLE, 0, 5), (COMMIT, 1, 5), (DURABLE, 1, 2), (COMMIT, 2, 2)]
    assert check_rigorousness((ev, 2))
    assert not check_sequentiality((ev, 2))


def test_commit_point_uses_durability_event():
    # T2 acks late but became recoverable once the CSN passed it
    ev = [(PRECOMMIT, 1, 1, WO, 0), (WRITE, 1, 0, 1), (READ, 2, 0, 1), (PRECOMMIT, 2, 2, HR, 0),
          (DURABLE, 0, 2), (COMMIT, 2, 2), (COMMIT, 1, 1)]
    a = analyze((ev, 1))
    assert a.txns[2].point == 4 and a.txns[1].point == 4
    assert a.order[1] < a.order[2]
    assert check_recoverability((ev, 1))


@pytest.mark.parametrize("seed", range(25))
def test_fuzz_seeds_pass(seed):
    r = fuzz_one(make_case(seed, max_txns=80))
    assert r.ok, r.details


def test_boundaries_seed0():
    out = exhaustive_boundaries(0)
    assert out and all(v for _, v in out), [(l, v.details) for l, v in out if not v][:3]
    assert len(out) > 3 * boundary_case(0).txns


@pytest.mark.parametrize("mode", ["skip_durability", "skip_waw"])
def test_broken_modes_are_caught(mode):
    for seed in range(300):
        case = make_case(seed, max_txns=120, broken=(mode,))
        if mode == "skip_waw" and case.buffers == 1:
            continue
        if not fuzz_one(case).ok:
            return
    pytest.fail(f"{mode} never detected")
