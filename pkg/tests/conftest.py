import numpy as np
import pytest

from cdpnes._backend import BACKENDS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


backends = pytest.mark.parametrize("backend", sorted(BACKENDS))


ACCEPTANCE_LINES = []


def acceptance_line(number, name, ok, detail):
    """Record and print one acceptance verdict; returns ``ok`` for asserting."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
