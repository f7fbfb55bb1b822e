import pytest

from liouville_lab.geometry import build_lattice

ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def lat8():
    return build_lattice(1 / 8)


@pytest.fixture(scope="session")
def lat16():
    return build_lattice(1 / 16)


@pytest.fixture(scope="session")
def lat32():
    return build_lattice(1 / 32)


@pytest.fixture(scope="session")
def lat64():
    return build_lattice(1 / 64)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
