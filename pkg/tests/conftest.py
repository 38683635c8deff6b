"""Acceptance bookkeeping: one summary line per criterion after the run.

Tests tagged ``@pytest.mark.criterion(n, "title")`` feed criterion ``n``; it
passes only if every tagged test passed. The ``accept`` fixture attaches the
measured numbers to the summary line.
"""

import pytest

CRITERIA = {}
DETAILS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


def _mark(item):
    return item.get_closest_marker("criterion")


@pytest.fixture
def accept(request):
    """Callable recording ``key=value`` notes for this test's criterion."""
    mark = _mark(request.node)
    n = mark.args[0] if mark else None

    def note(**kw):
        DETAILS.setdefault(n, []).extend(f"{k}={v}" for k, v in kw.items())

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = _mark(item)
    if mark is None:
        return
    n, title = mark.args[0], mark.args[1]
    entry = CRITERIA.setdefault(n, {"title": title, "passed": True, "ran": False})
    if rep.when == "call":
        entry["ran"] = True
    if rep.failed:
        entry["passed"] = False
        entry["ran"] = True


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        e = CRITERIA[n]
        verdict = "PASS" if e["passed"] and e["ran"] else ("FAIL" if e["ran"] else "NOT RUN")
        notes = "; ".join(DETAILS.get(n, []))
        tr.write_line(f"criterion {n} {verdict}: {e['title']}" + (f" [{notes}]" if notes else ""))
