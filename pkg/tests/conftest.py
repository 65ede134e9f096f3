import sys

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20201019)


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


def random_density(rng, n, rank=None):
    rank = rank or n
    a = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def assert_counts_match(counts, p, n, sigmas=4.0, min_expected=10.0):
    """Binomial check of observed counts against exact probabilities.

    Bins with fewer than ``min_expected`` expected hits are pooled into one
    bin, where the normal approximation would otherwise be meaningless.
    """
    counts = np.asarray(counts, dtype=float)
    p = np.asarray(p, dtype=float)
    big = n * p >= min_expected
    obs = np.append(counts[big], counts[~big].sum())
    prob = np.append(p[big], p[~big].sum())
    sigma = np.sqrt(n * prob * (1 - prob))
    bad = np.abs(obs - n * prob) > sigmas * sigma + (0 if prob[-1] * n >= min_expected else 1)
    assert not np.any(bad), list(zip(obs[bad], (n * prob)[bad]))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
