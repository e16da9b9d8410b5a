"""Shared pytest plumbing.

Registers the ``criterion`` marker used by the acceptance suite and
prints a one-line PASS/FAIL summary per acceptance criterion at the end
of the run so the overall verdict is readable without scrolling.
"""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> (description, outcome, detail)
_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(num, desc): acceptance criterion covered by this test",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num = int(marker.args[0])
    desc = str(marker.args[1]) if len(marker.args) > 1 else ""
    if report.when == "setup" and report.skipped:
        _CRITERIA[num] = [desc, "SKIP", ""]
    if report.when != "call":
        return
    detail = str(getattr(item, "criterion_detail", "") or "")
    status = "PASS" if report.passed else "FAIL"
    # keep the worst outcome if several tests share a criterion
    prev = _CRITERIA.get(num)
    if prev is not None and prev[1] == "FAIL":
        return
    _CRITERIA[num] = [desc, status, detail]


@pytest.fixture
def criterion_detail(request):
    """Callable the test uses to attach measured numbers to the summary line."""

    def record(text: str) -> None:
        request.node.criterion_detail = text

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        desc, status, detail = _CRITERIA[num]
        line = f"{status} criterion {num}: {desc}"
        if detail:
            line += f" [{detail}]"
        tr.write_line(line)
