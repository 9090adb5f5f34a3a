from __future__ import annotations

import pytest

from sepmap_lab.hamiltonian import classical_arnold, resonant_arnold

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def arnold():
    return classical_arnold(1e-3)


@pytest.fixture(scope="session")
def resonant():
    return resonant_arnold(1e-3, 0.25)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
