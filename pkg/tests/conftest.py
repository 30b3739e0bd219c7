import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE = {
    1: "reference table 2 reproduction",
    2: "LR comparison extract",
    3: "conditional extract",
    4: "algebraic identities",
    5: "moment oracles",
    6: "censored LR invariance across kernels",
    7: "z0 root",
    8: "spurious PIT pipeline",
    9: "simulate determinism across worker counts",
}

_outcomes = {}
_details = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): test belongs to acceptance criterion n")


@pytest.fixture
def acceptance_note(request):
    """Record a one-line detail for the criterion of the calling test."""
    marker = request.node.get_closest_marker("acceptance")

    def note(text):
        _details.setdefault(marker.args[0], []).append(text)

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        key = marker.args[0]
        passed = report.passed and not report.skipped
        prev = _outcomes.get(key, {})
        prev[item.nodeid] = passed and prev.get(item.nodeid, True)
        _outcomes[key] = prev


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key, name in ACCEPTANCE.items():
        res = _outcomes.get(key)
        if not res:
            status = "NOT RUN"
        else:
            status = "PASS" if all(res.values()) else "FAIL"
        total = len(res or {})
        ok = sum((res or {}).values())
        detail = "; ".join(_details.get(key, []))
        line = f"[{status}] criterion {key}: {name} ({ok}/{total} checks)"
        if detail:
            line += f" -- {detail}"
        tr.write_line(line)
