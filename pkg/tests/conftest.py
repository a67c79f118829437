import math
import re

import numpy as np
import pytest

from pdmp import models


class FixedStream:
    """Stand-in for a random stream that replays given uniforms."""

    def __init__(self, *uniforms):
        self._u = list(uniforms)

    def uniform(self):
        return self._u.pop(0)

    def uniforms(self, size):
        return np.array([self.uniform() for _ in range(size)])

    def exponential(self, rate=1.0):
        return -math.log(self.uniform()) / rate


@pytest.fixture
def tcp():
    return models.tcp_characteristics()


@pytest.fixture
def fixed_stream():
    return FixedStream


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    # a failing fixture reports in the setup phase, so record that too
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.failed):
        m = re.search(r"test_criterion_(\d+)", report.nodeid)
        if m:
            _ACCEPTANCE[int(m.group(1))] = (report.outcome, report.nodeid.split("::")[-1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        outcome, name = _ACCEPTANCE[k]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {k:2d}: {verdict}  {name}")
