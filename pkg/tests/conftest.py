import pytest

from poplar import invariants

ACCEPTANCE = {}  # criterion -> (ok, detail)
STARTED = set()
_session = {"tests": 0, "unexpected_trips": 0}


@pytest.fixture(autouse=True)
def no_invariant_trips(request):
    """Every test must leave the instrumented DSN/CSN assertions untripped."""
    before = invariants.total_trips()
    yield
    _session["tests"] += 1
    if request.node.get_closest_marker("trips_expected") is None:
        delta = invariants.total_trips() - before
        _session["unexpected_trips"] += delta
        assert delta == 0, dict(invariants.trips)


@pytest.fixture
def acceptance(pytestconfig, request):
    """Record one criterion's verdict and echo it straight to the terminal."""
    STARTED.add(int(request.node.name.split("_")[1][1:]))
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def record(n: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[n] = (ok, detail)
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return ok

    return record


def pytest_configure(config):
    config.addinivalue_line("markers", "trips_expected: test deliberately trips an invariant")
    config.addinivalue_line("markers", "slow: long-running acceptance check")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in range(1, 11):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            tr.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        elif n in STARTED:
            tr.write_line(f"criterion {n:>2}: FAIL  raised before reaching a verdict")
        else:
            tr.write_line(f"criterion {n:>2}: not run in this session")
    checks = sum(invariants.checks.values())
    tr.write_line(f"invariants over the whole session: {_session['unexpected_trips']} unexpected trip(s) "
                  f"in {_session['tests']} tests, {checks} checks evaluated")
