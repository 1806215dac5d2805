import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def A22():
    return np.array([[2.0, 1.0], [0.0, 0.5]])


@pytest.fixture
def B21():
    return np.array([[1.0], [0.0]])


@pytest.fixture
def sys22(A22, B21):
    from lts0.plant import LinearSystem

    return LinearSystem(A22, B21, 0.0, 0, 1)


def random_diagonalizable(rng, n, k=None, lam_max=2.0, perturb=0.3):
    """Real diagonalizable matrix with ``k`` eigenvalues in (1.1, lam_max) and the rest in (-0.9, 0.9)."""
    if k is None:
        k = int(rng.integers(1, n))
    unstable = rng.uniform(1.1, lam_max, k)
    stable = rng.uniform(-0.9, 0.9, n - k)
    lam = np.concatenate([unstable, stable])
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V = Q + perturb * rng.uniform(-1, 1, (n, n))
    return V @ np.diag(lam) @ np.linalg.inv(V), lam, k


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
