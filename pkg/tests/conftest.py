import os

import pytest


def pytest_collection_modifyitems(config, items):
    # "slow" tests run by default (deselect with -m "not slow"); "longrun" is opt-in
    if os.environ.get("ISINGDYN_LONGRUN") == "1":
        return
    skip_long = pytest.mark.skip(reason="long-running: set ISINGDYN_LONGRUN=1")
    for item in items:
        if "longrun" in item.keywords:
            item.add_marker(skip_long)


_CRITERIA = []


@pytest.fixture
def criterion():
    """``criterion(number, ok, detail)`` records one acceptance line and returns ``ok``."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
