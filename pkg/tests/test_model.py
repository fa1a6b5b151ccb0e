import numpy as np
import pytest

from conftest import path_matrix, random_sparse_sym
from graphsolver.model import (
    GraphBatch,
    ModelConfig,
    backward_from_output,
    forward,
    forward_with_cache,
    graph_conv,
    graph_norm,
    init_parameters,
    leaky_relu,
    parameter_layout,
    residual_block,
)
from graphsolver.sparse import SparseSymMatrix, permute


def block_params(d, rng, scale=0.5):
    bp = {"norm.alpha": rng.uniform(0.5, 1.5, d), "norm.gamma": rng.uniform(0.5, 1.5, d),
          "norm.beta": rng.uniform(-0.2, 0.2, d)}
    for c in ("conv1", "conv2"):
        bp[c + ".theta1"] = rng.uniform(-scale, scale, (d, d))
        bp[c + ".theta2"] = rng.uniform(-scale, scale, (d, d))
        bp[c + ".bias"] = rng.uniform(-0.1, 0.1, d)
    return bp


class TestInit:
    def test_deterministic(self):
        cfg = ModelConfig(d_in=16, d=32, num_blocks=4)
        a, b = init_parameters(cfg, 7), init_parameters(cfg, 7)
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)
        assert any(a[k].tobytes() != init_parameters(cfg, 8)[k].tobytes() for k in a)

    def test_encoder_bound(self):
        p = init_parameters(ModelConfig(d_in=16, d=32, num_blocks=1))
        assert np.abs(p["encoder.weight"]).max() <= 0.25

    def test_shapes_match_layout(self):
        cfg = ModelConfig(d_in=5, d=8, num_blocks=3)
        p = init_parameters(cfg)
        assert [(k, v.shape) for k, v in p.items()] == parameter_layout(cfg)

    def test_scalar_norm_layout(self):
        cfg = ModelConfig(d_in=2, d=8, num_blocks=1, scalar_norm=True)
        assert dict(parameter_layout(cfg))["blocks.0.norm.gamma"] == (1,)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            ModelConfig(d_in=0)


class TestGraphNorm:
    def test_hand_example(self):
        out = graph_norm(np.array([[1.0], [3.0]]), np.ones(1), np.ones(1), np.zeros(1), eps=0.0)
        np.testing.assert_allclose(out[:, 0], [-1.0, 1.0], rtol=1e-15)

    def test_constant_column(self):
        out = graph_norm(np.full((4, 2), 3.0), np.ones(2), np.ones(2), np.zeros(2))
        np.testing.assert_array_equal(out, 0.0)

    def test_per_graph_statistics(self, rng):
        x = rng.standard_normal((7, 3))
        a, g, b = rng.uniform(0, 1, 3), rng.uniform(0.5, 2, 3), rng.standard_normal(3)
        batched = graph_norm(x, a, g, b, offsets=[0, 3, 7])
        np.testing.assert_allclose(batched[:3], graph_norm(x[:3], a, g, b), rtol=1e-14)
        np.testing.assert_allclose(batched[3:], graph_norm(x[3:], a, g, b), rtol=1e-14)
        assert not np.allclose(batched, graph_norm(x, a, g, b))

    def test_alpha_zero_keeps_mean(self):
        # without the shift the second moment includes the mean
        x = np.array([[1.0], [3.0]])
        out = graph_norm(x, np.zeros(1), np.ones(1), np.zeros(1), eps=0.0)
        np.testing.assert_allclose(out[:, 0], x[:, 0] / np.sqrt(5.0), rtol=1e-15)


class TestGraphConv:
    def test_hand_example(self):
        A = SparseSymMatrix.from_dense([[1.0, 0.5], [0.5, 1.0]])
        out = graph_conv(A, np.array([[1.0], [2.0]]), np.ones((1, 1)), np.ones((1, 1)), np.zeros(1))
        np.testing.assert_allclose(out[:, 0], [3.0, 4.5], rtol=1e-15)

    def test_theta2_zero_is_pointwise(self, rng, fig1):
        x = rng.standard_normal((5, 3))
        t1 = rng.standard_normal((4, 3))
        out = graph_conv(fig1[0], x, t1, np.zeros((4, 3)), np.zeros(4))
        np.testing.assert_allclose(out, x @ t1.T, rtol=1e-14)

    def test_permutation_equivariant(self, rng):
        A = random_sparse_sym(rng, 30, 0.15)
        x = rng.standard_normal((30, 4))
        t1, t2, bias = rng.standard_normal((4, 4)), rng.standard_normal((4, 4)), rng.standard_normal(4)
        p = rng.permutation(30)
        inv = np.argsort(p)
        out = graph_conv(A, x, t1, t2, bias)
        outp = graph_conv(permute(A, p), x[inv], t1, t2, bias)
        np.testing.assert_allclose(outp, out[inv], rtol=1e-12, atol=1e-12)

    def test_shape_mismatch(self, fig1):
        with pytest.raises(ValueError):
            graph_conv(fig1[0], np.ones((4, 1)), np.ones((1, 1)), np.ones((1, 1)), np.zeros(1))


class TestResidualBlock:
    def test_zero_weights_identity(self, rng, fig1):
        d = 3
        bp = {k: np.zeros_like(v) for k, v in block_params(d, rng).items()}
        x = rng.standard_normal((5, d))
        np.testing.assert_array_equal(residual_block(fig1[0], x, bp), x)

    @pytest.mark.parametrize("n,d", [(1, 1), (5, 3), (17, 8)])
    def test_shape(self, rng, n, d):
        A = random_sparse_sym(rng, n, 0.3)
        assert residual_block(A, rng.standard_normal((n, d)), block_params(d, rng)).shape == (n, d)

    def test_message_passing_two_hops_per_block(self, rng):
        # the two convolutions of a block reach exactly two hops
        n, d = 12, 4
        A = path_matrix(n)
        bp = block_params(d, rng)
        x = rng.standard_normal((n, d))
        def convs(x):
            u = leaky_relu(graph_conv(A, x, bp["conv1.theta1"], bp["conv1.theta2"], bp["conv1.bias"]), 0.01)
            return x + graph_conv(A, u, bp["conv2.theta1"], bp["conv2.theta2"], bp["conv2.bias"])
        y = x.copy()
        y[0] += 1.0
        diff = np.abs(convs(y) - convs(x)).max(axis=1)
        assert np.all(diff[:3] > 0)
        np.testing.assert_array_equal(diff[3:], 0.0)

    @pytest.mark.xfail(strict=True, reason="per-graph normalization statistics couple every node of the graph")
    def test_block_locality_three_hops(self, rng):
        n, d = 12, 4
        A = path_matrix(n)
        bp = block_params(d, rng)
        x = rng.standard_normal((n, d))
        y = x.copy()
        y[0] += 1.0
        diff = np.abs(residual_block(A, y, bp) - residual_block(A, x, bp)).max(axis=1)
        np.testing.assert_array_equal(diff[3:], 0.0)


class TestForward:
    def test_zero_params(self, fig1):
        cfg = ModelConfig(d_in=3, d=4, num_blocks=2)
        p = {k: np.zeros_like(v) for k, v in init_parameters(cfg).items()}
        np.testing.assert_array_equal(forward(fig1[0], np.ones((5, 3)), p, cfg), 0.0)

    def test_shape(self, rng, fig1):
        cfg = ModelConfig(d_in=3, d=8, num_blocks=2)
        assert forward(fig1[0], rng.standard_normal((5, 3)), init_parameters(cfg), cfg).shape == (5,)

    def test_permutation_equivariant(self, rng):
        cfg = ModelConfig(d_in=4, d=16, num_blocks=3)
        params = init_parameters(cfg, 1)
        for _ in range(5):
            A = random_sparse_sym(rng, 60, 0.08)
            F = rng.uniform(-1, 1, (60, 4))
            p = rng.permutation(60)
            inv = np.argsort(p)
            y = forward(A, F, params, cfg)
            yp = forward(permute(A, p), F[inv], params, cfg)
            np.testing.assert_allclose(yp, y[inv], rtol=0, atol=1e-9)

    def test_deterministic_bitwise(self, rng):
        cfg = ModelConfig(d_in=2, d=8, num_blocks=2)
        A = random_sparse_sym(rng, 40, 0.1)
        F = rng.standard_normal((40, 2))
        p = init_parameters(cfg)
        assert forward(A, F, p, cfg).tobytes() == forward(A, F, p, cfg).tobytes()

    def test_batch_equals_separate(self, rng):
        cfg = ModelConfig(d_in=2, d=8, num_blocks=2)
        params = init_parameters(cfg, 3)
        mats = [random_sparse_sym(rng, n, 0.2) for n in (7, 12, 5)]
        feats = [rng.standard_normal((m.n, 2)) for m in mats]
        batch = GraphBatch(mats)
        y = forward(batch.matrix, np.vstack(feats), params, cfg, batch.offsets)
        for part, A, F in zip(batch.split(y), mats, feats):
            np.testing.assert_allclose(part, forward(A, F, params, cfg), rtol=1e-12, atol=1e-12)

    def test_batch_membership(self, rng):
        batch = GraphBatch([SparseSymMatrix.identity(2), SparseSymMatrix.identity(3)])
        assert batch.membership.tolist() == [0, 0, 1, 1, 1]
        assert batch.num_graphs == 2
        assert batch.matrix.shape == (5, 5)
        assert batch.matrix[1, 2] == 0

    def test_backward_grad_names(self, rng, fig1):
        cfg = ModelConfig(d_in=2, d=4, num_blocks=2)
        p = init_parameters(cfg)
        _, cache = forward_with_cache(fig1[0], rng.standard_normal((5, 2)), p, cfg)
        grads = backward_from_output(np.ones(5), cache, p, cfg)
        assert list(grads) == list(p)
        assert all(grads[k].shape == p[k].shape for k in p)
