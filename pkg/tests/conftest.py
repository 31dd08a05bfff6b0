import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from otfuse.config import ExperimentConfig

settings.register_profile("otfuse", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("otfuse")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_config():
    return ExperimentConfig(samples_per_combination=1, grid=[8, 8], epsilon=0.05)


def lp_transport_cost(mu, nu, cost):
    """Exact OT cost by a generic LP solver; independent of the library's oracle."""
    from scipy.optimize import linprog

    n, m = cost.shape
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=np.concatenate([mu, nu]), bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun, res.x.reshape(n, m)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
