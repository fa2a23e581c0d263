"""Shared fixtures and the per-criterion acceptance summary."""

from __future__ import annotations

import pytest

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _CRITERIA.setdefault(number, {"title": title, "outcomes": []})


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for number, entry in _CRITERIA.items():
        if f"criterion{number:02d}" in report.nodeid:
            entry["outcomes"].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        outcomes = entry["outcomes"]
        if not outcomes:
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {entry['title']}")


@pytest.fixture(scope="session")
def im_default():
    from orbitforge.plants import build_system

    return build_system("im_fixed")
