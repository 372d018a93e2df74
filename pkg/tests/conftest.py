import logging

import numpy as np
import pytest


@pytest.fixture(autouse=True)
def _quiet_solver_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="dpglasso")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, p, ridge=0.1):
    A = rng.standard_normal((p, p))
    return A @ A.T / p + ridge * np.eye(p)


# 4x4 toy precision and its rounded noisy counterpart at noise variance 0.3
TOY_THETA = np.array([
    [1.0, 0.3, 0.0, 0.25],
    [0.3, 1.0, -0.1, 0.0],
    [0.0, -0.1, 1.0, 0.0],
    [0.25, 0.0, 0.0, 1.0],
])
TOY_THETA_NOISY = np.array([
    [0.75, 0.18, 0.0041, 0.15],
    [0.18, 0.76, -0.06, -0.01],
    [0.0041, -0.06, 0.77, -0.0002],
    [0.15, -0.01, -0.0002, 0.76],
])


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
