import sys

import numpy as np
import pytest


def random_instance(rng, J=None, P=None, overidentified=False):
    """A well-conditioned random ``(G, S)`` pair."""
    J = J or int(rng.integers(2, 8))
    lo = 1
    hi = J - 1 if overidentified else J
    P = P or int(rng.integers(lo, hi + 1))
    G = rng.normal(size=(J, P))
    A = rng.normal(size=(J, J))
    S = A @ A.T / J + 0.5 * np.eye(J)
    return G, S


def random_weight(rng, J):
    A = rng.normal(size=(J, J))
    return A @ A.T / J + 0.2 * np.eye(J)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not getattr(module, "RESULTS", None):
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
