import numpy as np
import pytest

from kernelbias.rng import Pcg32


def random_symmetric(n, seed):
    A = Pcg32.from_labels(seed, "sym").normal(n * n).reshape(n, n)
    return (A + A.T) / 2


def random_dominant(n, ratio, seed, lo=0.5, hi=1.0):
    """Symmetric matrix with diagonal in [lo, hi] and max off-diagonal <= ratio * min diagonal."""
    g = Pcg32.from_labels(seed, "dominant-test")
    d = g.uniform(lo, hi, n)
    U = np.triu(g.uniform(-1.0, 1.0, n * n).reshape(n, n), 1)
    return np.diag(d) + (U + U.T) * ratio * d.min()


def random_spd(n, seed):
    A = Pcg32.from_labels(seed, "spd").normal(n * n).reshape(n, n)
    return A @ A.T + n * np.eye(n)


@pytest.fixture
def rng():
    return Pcg32(12345)
