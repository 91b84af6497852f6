import numpy as np
import pytest

from magspec.operators import Grid, KernelOperator


def random_kernel(rng, grid, hermitian=False, complex_=True):
    n = grid.n
    K = rng.normal(size=(n, n))
    if complex_:
        K = K + 1j * rng.normal(size=(n, n))
    if hermitian:
        K = 0.5 * (K + K.conj().T)
    return KernelOperator(grid, K, hermitian=hermitian)


def random_hermitian_matrix(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (A + A.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def line16():
    return Grid(1, 16)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
