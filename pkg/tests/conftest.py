import functools

import pytest

from gfmosc.scenario_file import preset
from gfmosc.simulator import run_scenario

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def preset_series(name):
    return run_scenario(preset(name).validate())


@pytest.fixture
def record_criterion():
    def record(number, title, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
