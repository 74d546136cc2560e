import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fundalloc import AllocationInstance, RevenueMatrix
from fundalloc.synth import worked_example_instance

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

GOLDEN_E = np.array([[510.0, 450.0], [900.0, 600.0], [500.0, 300.0]])


@pytest.fixture
def golden():
    return worked_example_instance()


def random_instance(rng, n, m, k=1, levels=3, continuous=True):
    """Feasible-by-construction instance: demands are column counts of a random valid assignment."""
    r = rng.integers(1, levels + 1, size=m)
    r[rng.permutation(m)[:k]] = 1
    t = rng.integers(1, levels + 1, size=n)
    elig = t[:, None] >= r[None, :]
    keys = np.where(elig, rng.random((n, m)), -1.0)
    picks = np.argsort(-keys, axis=1)[:, :k]
    demand = np.bincount(picks.ravel(), minlength=m)
    if continuous:
        values = rng.gamma(2.0, 50.0, size=(n, m))
    else:
        values = rng.integers(0, 6, size=(n, m)).astype(float)
    return AllocationInstance(t, r, demand, RevenueMatrix.dense(values), k=k, n_levels=levels)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
