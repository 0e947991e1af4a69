import pytest

from relcast.sweep import SplitSpec, run_sweep, split


@pytest.fixture(scope="session")
def sweep900():
    return run_sweep()


@pytest.fixture(scope="session")
def split900(sweep900):
    return split(sweep900, SplitSpec(0.6, 42))


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
