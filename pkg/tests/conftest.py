"""Shared pytest wiring: per-criterion pass/fail summary lines."""

import pytest

_STATUS: dict[int, str] = {}
_NOTES: dict[int, str] = {}


def note(num: int, text: str) -> None:
    """Attach a measurement note shown next to the criterion line."""
    _NOTES[num] = text


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(n): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num = marker.args[0]
    if rep.failed:
        _STATUS[num] = "FAIL"
    elif rep.skipped:
        _STATUS.setdefault(num, "SKIP")
    elif rep.when == "call" and rep.passed:
        _STATUS.setdefault(num, "PASS")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _STATUS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_STATUS):
        line = f"criterion {num:2d}: {_STATUS[num]}"
        if num in _NOTES:
            line += f"  ({_NOTES[num]})"
        terminalreporter.write_line(line)
