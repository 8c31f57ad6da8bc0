"""Per-criterion pass/fail lines for the acceptance suite.

Tests marked ``@pytest.mark.criterion(n, title)`` may fill the ``measured``
fixture with the quantities they checked; the terminal summary prints one line
per criterion, failing it if any of its tests failed.
"""

import pytest

RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion checked by this test")


@pytest.fixture
def measured(request):
    values = {}
    request.node.measured = values
    return values


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    n, title = marker.args
    entry = RESULTS.setdefault(n, {"title": title, "ok": True, "values": {}, "failed": []})
    if not rep.passed:
        entry["ok"] = False
        entry["failed"].append(item.name)
    entry["values"].update(getattr(item, "measured", {}))


def _fmt(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        e = RESULTS[n]
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in e["values"].items())
        line = f"criterion {n:2d} {'PASS' if e['ok'] else 'FAIL'}  {e['title']}"
        if vals:
            line += f"  [{vals}]"
        if e["failed"]:
            line += f"  failing: {', '.join(e['failed'])}"
        terminalreporter.write_line(line)
