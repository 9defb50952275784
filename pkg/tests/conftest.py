import numpy as np
import pytest

from mvica.model import MultiViewDataset, SolverConfig, logcosh


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def contrast():
    return logcosh()


def random_problem(rng, m, k, n, scale=1.0):
    """Random views and well-conditioned unmixing matrices."""
    X = rng.standard_normal((m, k, n)) * scale
    W = np.eye(k) + 0.3 * rng.standard_normal((m, k, k))
    return W, MultiViewDataset(X)


@pytest.fixture
def cfg():
    return SolverConfig()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORT

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT):
            terminalreporter.write_line(line)
