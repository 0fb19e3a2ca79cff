import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from graphscan.graph import build_kmst, build_mst, compute_distances  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian_mst(n, d, seed, k=1):
    obs = np.random.default_rng(seed).standard_normal((n, d))
    dist = compute_distances(obs)
    return obs, (build_mst(dist) if k == 1 else build_kmst(dist, k))


def shifted_sequence(n=40, tau=20, d=2, shift=3.0, seed=1):
    """Gaussian sequence whose mean moves by ``shift`` after ``tau``."""
    obs = np.random.default_rng(seed).standard_normal((n, d))
    obs[tau:] += shift
    return obs


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
