import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from rlmh.numkit import RngStream  # noqa: E402


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture
def nprng():
    return np.random.default_rng(2024)


CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""

    def record(number, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
