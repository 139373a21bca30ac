import pytest

from scsat.bicm.decoder import RegularEnsemble
from scsat.system import build_profile_table
from scsat.systems import bec36

VERDICTS = []


def record(line: str) -> None:
    """Collect one acceptance verdict line; echoed in the terminal summary."""
    VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ens36():
    return RegularEnsemble(3, 6)


@pytest.fixture(scope="session")
def bec36_table():
    return build_profile_table(bec36(0.53), 2048)
