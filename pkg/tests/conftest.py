import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from graphsolver.sparse import SparseSymMatrix

# single BLAS thread everywhere: determinism checks compare bits
threadpool_limits(1)

FIG1_DENSE = np.array([
    [1.0, 0.5, 0.0, 0.0, 0.0],
    [0.5, 2.2, 4.1, 0.0, 1.2],
    [0.0, 4.1, -1.5, 2.0, 0.0],
    [0.0, 0.0, 2.0, 3.6, -0.8],
    [0.0, 1.2, 0.0, -0.8, -0.1],
])
FIG1_B = np.array([2.7, -1.1, -2.6, 5.4, 4.8])


@pytest.fixture
def fig1():
    return SparseSymMatrix.from_dense(FIG1_DENSE), FIG1_B.copy()


def random_sparse_sym(rng, n, density=0.1, spd=False):
    """Random symmetric sparse matrix; diagonally dominant (hence SPD) when ``spd``."""
    M = np.where(rng.random((n, n)) < density, rng.uniform(-1, 1, (n, n)), 0.0)
    M = np.triu(M, 1)
    M = M + M.T
    if spd:
        np.fill_diagonal(M, np.abs(M).sum(axis=1) + rng.uniform(0.1, 1.0, n))
    else:
        np.fill_diagonal(M, rng.uniform(-2, 2, n))
    return SparseSymMatrix.from_dense(M)


def path_matrix(n, diag=2.0, off=-1.0):
    i = np.arange(n)
    return SparseSymMatrix(n, np.r_[i, i[:-1]], np.r_[i, i[1:]], np.r_[np.full(n, diag), np.full(n - 1, off)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class ExactDirectionStub:
    """Stand-in model whose direction is the exact solution of the scaled system."""

    def solve(self, A, b, *, trace=False):
        from graphsolver.inference import neural_solve
        from graphsolver.solvers import dense_cholesky_solve

        return neural_solve(A, b, lambda s: dense_cholesky_solve(s.matrix, s.rhs), trace=trace)


class ZeroStub:
    """Stand-in model that always predicts the zero vector."""

    def solve(self, A, b, *, trace=False):
        from graphsolver.inference import neural_solve

        return neural_solve(A, b, lambda s: np.zeros(s.n), trace=trace)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
