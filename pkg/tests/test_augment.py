import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIG1_DENSE, random_sparse_sym
from graphsolver.augment import (
    PRESETS,
    AugmentationConfig,
    arnoldi_augment,
    build_features,
    cg_augment,
    diagonal_augment,
    jacobi_augment,
    normalize_column,
)
from graphsolver.dataset import generate_grid_system
from graphsolver.scaling import normalize_system
from graphsolver.solvers import ZeroDiagonalError
from graphsolver.sparse import SparseSymMatrix, permute, permute_vec


def dense_jacobi(M, b, m):
    D = np.diag(M)
    R = M - np.diag(D)
    x = np.zeros_like(b)
    out = []
    for _ in range(m):
        x = (b - R @ x) / D
        out.append(x)
    return out


class TestNormalizeColumn:
    def test_basic(self):
        np.testing.assert_array_equal(normalize_column([2.0, -4.0]), [0.5, -1.0])

    def test_zero(self):
        np.testing.assert_array_equal(normalize_column(np.zeros(3)), np.zeros(3))

    def test_below_tolerance_unchanged(self):
        np.testing.assert_array_equal(normalize_column([1e-40, 0.0], tol=1e-30), [1e-40, 0.0])


class TestDiagonal:
    def test_fig1(self, fig1):
        np.testing.assert_array_equal(diagonal_augment(fig1[0]), [1.0, 2.2, -1.5, 3.6, -0.1])

    def test_identity(self):
        np.testing.assert_array_equal(diagonal_augment(SparseSymMatrix.identity(4)), np.ones(4))

    def test_hollow(self):
        A = SparseSymMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(diagonal_augment(A), np.zeros(2))


class TestJacobi:
    def test_two_hand_iterations(self):
        A = SparseSymMatrix.from_dense([[2.0, 1.0], [1.0, 2.0]])
        raw = dense_jacobi(A.to_dense(), np.array([3.0, 3.0]), 2)
        np.testing.assert_array_equal(raw[0], [1.5, 1.5])
        np.testing.assert_array_equal(raw[1], [0.75, 0.75])
        cols = jacobi_augment(A, [3.0, 3.0], 2)
        # after max-abs normalization both iterates point the same way
        np.testing.assert_array_equal(cols[0], [1.0, 1.0])
        np.testing.assert_array_equal(cols[1], [1.0, 1.0])

    def test_identity_repeats_b(self):
        b = np.array([0.5, -1.0, 0.25])
        for c in jacobi_augment(SparseSymMatrix.identity(3), b, 4):
            np.testing.assert_array_equal(c, b)

    def test_hollow_raises_with_row(self):
        A = SparseSymMatrix.from_dense([[1.0, 1.0], [1.0, 0.0]])
        with pytest.raises(ZeroDiagonalError, match="row 1"):
            jacobi_augment(A, [1.0, 1.0], 3)

    def test_matches_dense_oracle(self, rng):
        A = random_sparse_sym(rng, 30, 0.1, spd=True)
        b = rng.standard_normal(30)
        for got, raw in zip(jacobi_augment(A, b, 6), dense_jacobi(A.to_dense(), b, 6)):
            np.testing.assert_allclose(got, raw / np.abs(raw).max(), rtol=1e-12, atol=1e-14)


class TestCG:
    def test_identity_one_step(self):
        b = np.array([1.0, -0.5])
        cols = cg_augment(SparseSymMatrix.identity(2), b, 5)
        for c in cols:
            np.testing.assert_array_equal(c, b)

    def test_exact_in_two_steps(self):
        cols = cg_augment(SparseSymMatrix.diag([1.0, 2.0]), [1.0, 2.0], 3)
        np.testing.assert_allclose(cols[1], [1.0, 1.0], rtol=1e-14)
        np.testing.assert_allclose(cols[2], [1.0, 1.0], rtol=1e-14)

    def test_zero_rhs(self):
        for c in cg_augment(SparseSymMatrix.identity(3), np.zeros(3), 4):
            np.testing.assert_array_equal(c, 0.0)

    def test_indefinite_is_finite(self, rng):
        A = random_sparse_sym(rng, 20, 0.3)
        cols = cg_augment(A, rng.standard_normal(20), 14)
        assert all(np.all(np.isfinite(c)) for c in cols)


class TestArnoldi:
    def test_scaled_identity(self):
        for c in arnoldi_augment(SparseSymMatrix.diag([2.0, 2.0]), [1.0, 0.0], 3):
            np.testing.assert_array_equal(c, [1.0, 0.0])

    def test_swap_alternates(self):
        A = SparseSymMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]])
        cols = arnoldi_augment(A, [1.0, 0.0], 4)
        np.testing.assert_array_equal(np.array(cols), [[0, 1], [1, 0], [0, 1], [1, 0]])

    def test_zero_rhs(self):
        for c in arnoldi_augment(SparseSymMatrix.identity(3), np.zeros(3), 3):
            np.testing.assert_array_equal(c, 0.0)

    def test_matches_power_oracle(self, rng):
        A = random_sparse_sym(rng, 15, 0.3)
        b = rng.standard_normal(15)
        M = A.to_dense()
        for k, c in enumerate(arnoldi_augment(A, b, 5), start=1):
            raw = np.linalg.matrix_power(M, k) @ b
            np.testing.assert_allclose(c, raw / np.abs(raw).max(), rtol=1e-10, atol=1e-12)


class TestBuildFeatures:
    def test_default_preset_is_16_wide(self):
        s = generate_grid_system(4, 5, seed=1)
        sc = normalize_system(s.A, s.b)
        F = build_features(sc.matrix, sc.rhs)
        assert F.shape == (20, 16)
        assert F.labels == ("b", "diag") + tuple(f"cg_{k}" for k in range(1, 15))

    def test_b_only(self, fig1):
        A, b = fig1
        F = build_features(A, b, AugmentationConfig(include_diagonal=False, cg_steps=0))
        assert F.shape == (5, 1)
        np.testing.assert_array_equal(F.values[:, 0], b / 5.4)

    def test_cg_jacobi_preset(self):
        cfg = AugmentationConfig.preset("cg+jacobi", 14)
        s = generate_grid_system(3, 4, seed=2)
        F = build_features(s.A, s.b, cfg)
        assert F.shape == (12, 1 + 1 + 14 + 14)
        assert "jacobi_14" in F.labels and "cg_14" in F.labels

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_presets_bounded_and_finite(self, name, rng):
        A = random_sparse_sym(rng, 30, 0.1, spd=True)
        sc = normalize_system(A, rng.standard_normal(30))
        F = build_features(sc.matrix, sc.rhs, AugmentationConfig.preset(name, 5))
        assert np.all(np.isfinite(F.values))
        assert np.abs(F.values).max() <= 1 + 1e-12

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="unknown augmentation preset"):
            AugmentationConfig.preset("lu")

    def test_config_dict_roundtrip(self):
        cfg = AugmentationConfig.preset("cg+arnoldi", 3)
        assert AugmentationConfig.from_dict(cfg.to_dict()) == cfg

    def test_permutation_equivariance(self, rng):
        cfg = AugmentationConfig(jacobi_steps=4, cg_steps=6, arnoldi_steps=4)
        for _ in range(5):
            A = random_sparse_sym(rng, 50, 0.08, spd=True)
            b = rng.standard_normal(50)
            p = rng.permutation(50)
            F = build_features(A, b, cfg).values
            Fp = build_features(permute(A, p), permute_vec(b, p), cfg).values
            np.testing.assert_array_equal(Fp, F[np.argsort(p)])

    def test_equivariance_bitwise_on_indefinite(self, rng):
        cfg = AugmentationConfig(jacobi_steps=3, cg_steps=14, arnoldi_steps=3)
        A = random_sparse_sym(rng, 70, 0.1)
        b = rng.standard_normal(70)
        p = rng.permutation(70)
        F = build_features(A, b, cfg).values
        Fp = build_features(permute(A, p), permute_vec(b, p), cfg).values
        assert Fp.tobytes() == F[np.argsort(p)].tobytes()

    @settings(max_examples=25, deadline=None)
    @given(st.integers(-30, 30), st.integers(-30, 30))
    def test_features_scale_invariant_after_normalization(self, ea, eb):
        A = SparseSymMatrix.from_dense(FIG1_DENSE)
        b = np.array([2.7, -1.1, -2.6, 5.4, 4.8])
        cfg = AugmentationConfig(cg_steps=4, arnoldi_steps=3, jacobi_steps=3)
        ref = normalize_system(A, b)
        s = normalize_system(A.scaled(2.0**ea), b * 2.0**eb)
        np.testing.assert_array_equal(build_features(s.matrix, s.rhs, cfg).values,
                                      build_features(ref.matrix, ref.rhs, cfg).values)
