import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from zeroorder.core import Objective

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


class CountingObjective:
    """Wraps a vectorized function and counts every point it sees."""

    def __init__(self, fn, dim):
        self.fn = fn
        self.dim = dim
        self.calls = 0

    def batch(self, X):
        X = np.atleast_2d(X)
        self.calls += X.shape[0]
        return self.fn(X)

    def __call__(self, x):
        return float(self.batch(np.asarray(x, dtype=float)[None, :])[0])


def quadratic(H, a, c=0.0):
    """``0.5 x^T H x + a^T x + c`` as a batched objective, plus its gradient."""
    H = np.asarray(H, dtype=float)
    a = np.asarray(a, dtype=float)

    def batch(X):
        X = np.atleast_2d(X)
        return 0.5 * np.einsum("ki,ij,kj->k", X, H, X) + X @ a + c

    f = Objective(batch=batch, dim=a.size, name="quadratic")
    return f, (lambda x: H @ np.asarray(x, dtype=float) + a)


def random_spd(n, rng, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.geomspace(1.0, cond, n)
    M = (Q * ev) @ Q.T
    return 0.5 * (M + M.T)


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)
