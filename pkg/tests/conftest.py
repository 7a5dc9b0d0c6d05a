import numpy as np
import pytest

from pathoclf.core import Dataset, Vocabulary


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blobs(n_per_class, dim=4, sep=6.0, seed=0, names=None):
    """Small well-separated Gaussian blobs, rows grouped by class."""
    r = np.random.default_rng(seed)
    k = len(n_per_class)
    names = names or [f"C{i}" for i in range(k)]
    xs, ys = [], []
    for c, m in enumerate(n_per_class):
        center = np.zeros(dim)
        center[c % dim] = sep * (1 + c // dim)
        xs.append(center + r.standard_normal((m, dim)))
        ys.append(np.full(m, c))
    x = np.vstack(xs)
    y = np.concatenate(ys)
    ids = tuple(f"u{i:03d}" for i in range(len(y)))
    return Dataset(x, y, Vocabulary(names), None, ids)


@pytest.fixture
def small_blobs():
    return blobs([20, 15, 10])


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title, details = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{status}] {n:>2}. {title}: {details}")
