import numpy as np
import pytest

from conftest import ExactDirectionStub, ZeroStub, path_matrix, random_sparse_sym
from graphsolver.dataset import generate_random_spd
from graphsolver.solvers import (
    DenseCapExceededError,
    NotPositiveDefiniteError,
    ZeroDiagonalError,
    conjugate_gradient,
    dense_cholesky_solve,
    hybrid_solve,
    jacobi_solve,
    relative_residual,
)
from graphsolver.sparse import DimensionMismatchError, SparseSymMatrix


class TestCG:
    def test_identity(self):
        b = np.array([1.0, -2.0, 3.0])
        rep = conjugate_gradient(SparseSymMatrix.identity(3), b)
        assert rep.converged and rep.iterations == 1
        np.testing.assert_allclose(rep.solution, b)

    def test_hand_3x3(self):
        rep = conjugate_gradient(path_matrix(3), [1.0, 0.0, 0.0], tol=1e-12)
        assert rep.converged and rep.iterations <= 3
        np.testing.assert_allclose(rep.solution, [0.75, 0.5, 0.25], atol=1e-10)

    def test_exact_init_zero_iterations(self):
        rep = conjugate_gradient(path_matrix(3), [1.0, 0.0, 0.0], x0=[0.75, 0.5, 0.25])
        assert rep.converged and rep.iterations == 0

    def test_exact_init_zero_iterations_error_mode(self, rng):
        s = generate_random_spd(40, 0.1, seed=1)
        rep = conjugate_gradient(s.A, s.b, x0=s.x, tol=1e-2, x_ref=s.x)
        assert rep.iterations == 0

    def test_zero_rhs(self):
        rep = conjugate_gradient(path_matrix(4), np.zeros(4))
        assert rep.converged and rep.iterations == 0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            conjugate_gradient(path_matrix(3), np.ones(4))

    def test_breakdown_on_indefinite(self):
        A = SparseSymMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]])
        rep = conjugate_gradient(A, [1.0, 0.0])
        assert not rep.converged
        assert "breakdown" in rep.message

    def test_max_iter_reported(self, rng):
        A = random_sparse_sym(rng, 80, 0.05, spd=True)
        rep = conjugate_gradient(A, rng.standard_normal(80), tol=1e-14, max_iter=2)
        assert not rep.converged and rep.iterations == 2

    def test_matches_cholesky(self, rng):
        for _ in range(10):
            n = int(rng.integers(5, 120))
            s = generate_random_spd(n, 0.1, seed=int(rng.integers(1 << 30)))
            ref = dense_cholesky_solve(s.A, s.b)
            rep = conjugate_gradient(s.A, s.b, tol=1e-12, max_iter=50 * n)
            assert rep.converged
            assert np.linalg.norm(rep.solution - ref) <= 1e-8 * np.linalg.norm(ref)

    def test_a_norm_error_monotone(self, rng):
        s = generate_random_spd(60, 0.1, seed=3)
        M = s.A.to_dense()
        ref = dense_cholesky_solve(s.A, s.b)
        errs = []
        for k in range(25):
            x = conjugate_gradient(s.A, s.b, tol=0.0, max_iter=k).solution
            e = x - ref
            errs.append(np.sqrt(e @ M @ e))
        assert all(b <= a * (1 + 1e-10) for a, b in zip(errs, errs[1:]))

    def test_history(self):
        rep = conjugate_gradient(path_matrix(6), np.ones(6), record_history=True)
        assert len(rep.residual_history) == rep.iterations + 1


class TestJacobi:
    def test_identity(self):
        rep = jacobi_solve(SparseSymMatrix.identity(3), [1.0, 2.0, 3.0])
        assert rep.converged and rep.iterations == 1

    def test_contraction(self):
        A = SparseSymMatrix.from_dense([[2.0, 1.0], [1.0, 2.0]])
        rep = jacobi_solve(A, [3.0, 3.0], tol=1e-12)
        assert rep.converged
        np.testing.assert_allclose(rep.solution, [1.0, 1.0], atol=1e-11)

    def test_divergence_flagged(self):
        A = SparseSymMatrix.from_dense([[1.0, 5.0, 0.0], [5.0, 1.0, 5.0], [0.0, 5.0, 1.0]])
        rep = jacobi_solve(A, [1.0, 1.0, 1.0])
        assert not rep.converged and rep.message == "diverged"
        assert rep.iterations < 100

    def test_zero_diagonal(self):
        with pytest.raises(ZeroDiagonalError):
            jacobi_solve(SparseSymMatrix.from_dense([[0.0, 1.0], [1.0, 1.0]]), [1.0, 1.0])


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(dense_cholesky_solve(SparseSymMatrix.identity(3), [1.0, 2.0, 3.0]), [1, 2, 3])

    def test_random_spd_residual(self, rng):
        G = rng.standard_normal((50, 50))
        A = SparseSymMatrix.from_dense(G.T @ G + np.eye(50))
        b = rng.standard_normal(50)
        assert relative_residual(A, dense_cholesky_solve(A, b), b) < 1e-12

    def test_indefinite(self):
        with pytest.raises(NotPositiveDefiniteError):
            dense_cholesky_solve(SparseSymMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]]), [1.0, 1.0])

    def test_cap(self):
        with pytest.raises(DenseCapExceededError):
            dense_cholesky_solve(SparseSymMatrix.identity(10), np.ones(10), dense_cap=5)


class TestHybrid:
    def test_exact_stub(self):
        s = generate_random_spd(50, 0.1, seed=4)
        rep = hybrid_solve(s.A, s.b, ExactDirectionStub(), tol=1e-8)
        assert rep.warm.iterations <= 1
        assert rep.cold.iterations > 1

    def test_zero_stub_matches_cold(self):
        s = generate_random_spd(50, 0.1, seed=5)
        rep = hybrid_solve(s.A, s.b, ZeroStub(), tol=1e-8)
        np.testing.assert_array_equal(rep.initial_guess, 0.0)
        assert rep.warm.iterations == rep.cold.iterations
