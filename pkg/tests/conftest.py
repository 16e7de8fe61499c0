import numpy as np
import pytest

from holddmm.kernel import KernelSpec
from holddmm.momenta import MomentumConfig


def random_config(rng, n=2, sigma=None, scale=1.0, spread=1.5, first_order=True, dim=2):
    sigma = rng.uniform(1.0, 4.0) if sigma is None else sigma
    x0 = rng.normal(scale=spread, size=(n, dim))
    z = rng.uniform(-scale, scale, size=(n, dim))
    Z = rng.uniform(-scale, scale, size=(n, dim, dim)) if first_order else None
    return MomentumConfig.from_arrays(KernelSpec(sigma, dim), x0, z, Z)


def central_difference(f, x, h=1e-6):
    """Central-difference gradient of scalar ``f`` at the flat array ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def relative_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
