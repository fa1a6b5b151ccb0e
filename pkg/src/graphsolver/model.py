"""Encode-process-decode graph network that predicts a solution direction.

Layout: a linear node encoder, ``num_blocks`` residual blocks and a two-layer
LeakyReLU decoder emitting one scalar per node. Every residual block computes

    h + conv2(leaky(conv1(graph_norm(h))))

with the edge-weighted convolution

    x_i' = theta1 x_i + theta2 sum_j a_ji x_j + bias

whose sum aggregation is a sparse matrix product with the scaled system
matrix, self-loops included.

Forward and reverse passes are written out by hand in numpy; each forward
helper returns a cache consumed by the matching ``*_backward`` function.
Batches are block-diagonal unions of graphs described by ``offsets`` (node
``i`` belongs to graph ``g`` when ``offsets[g] <= i < offsets[g + 1]``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import SparseSymMatrix

__all__ = [
    "ModelConfig",
    "GraphBatch",
    "parameter_layout",
    "init_parameters",
    "leaky_relu",
    "graph_norm",
    "graph_conv",
    "residual_block",
    "forward",
    "forward_with_cache",
    "backward_from_output",
]


@dataclass(frozen=True)
class ModelConfig:
    d_in: int
    d: int = 32
    num_blocks: int = 10
    leaky_slope: float = 0.01
    norm_epsilon: float = 1e-5
    scalar_norm: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.d_in < 1 or self.d < 1 or self.num_blocks < 1:
            raise ValueError("d_in, d and num_blocks must all be >= 1")

    @classmethod
    def small(cls, d_in, **kw):
        return cls(d_in=d_in, d=32, **kw)

    @classmethod
    def medium(cls, d_in, **kw):
        return cls(d_in=d_in, d=128, **kw)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class GraphBatch:
    """Block-diagonal union of scaled systems."""

    def __init__(self, matrices, rhs=None):
        mats = [m.csr if isinstance(m, SparseSymMatrix) else sp.csr_matrix(m) for m in matrices]
        if not mats:
            raise ValueError("empty batch")
        counts = np.array([m.shape[0] for m in mats], dtype=np.int64)
        if np.any(counts < 1):
            raise ValueError("every graph in a batch needs at least one node")
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self.matrix = mats[0] if len(mats) == 1 else sp.block_diag(mats, format="csr")
        self.matrix.sort_indices()
        self.rhs = None if rhs is None else np.concatenate([np.asarray(r, dtype=np.float64) for r in rhs])

    @classmethod
    def from_systems(cls, systems):
        return cls([s.matrix for s in systems], [s.rhs for s in systems])

    @property
    def num_graphs(self):
        return self.offsets.size - 1

    @property
    def counts(self):
        return np.diff(self.offsets)

    @property
    def membership(self):
        return np.repeat(np.arange(self.num_graphs), self.counts)

    def split(self, v):
        return np.split(np.asarray(v), self.offsets[1:-1])


def parameter_layout(cfg):
    """Ordered ``(name, shape)`` pairs; this order is also the checkpoint order."""
    d, norm = cfg.d, (1,) if cfg.scalar_norm else (cfg.d,)
    out = [("encoder.weight", (d, cfg.d_in)), ("encoder.bias", (d,))]
    for k in range(cfg.num_blocks):
        p = f"blocks.{k}."
        out += [(p + "norm.alpha", norm), (p + "norm.gamma", norm), (p + "norm.beta", norm)]
        for c in ("conv1", "conv2"):
            out += [(p + c + ".theta1", (d, d)), (p + c + ".theta2", (d, d)), (p + c + ".bias", (d,))]
    out += [
        ("decoder.0.weight", (d, d)),
        ("decoder.0.bias", (d,)),
        ("decoder.1.weight", (1, d)),
        ("decoder.1.bias", (1,)),
    ]
    return out


def init_parameters(cfg, seed=None):
    """Weights uniform in ``+-sqrt(1/fan_in)``, biases 0, norm ``alpha = gamma = 1, beta = 0``."""
    rng = np.random.Generator(np.random.Philox(cfg.seed if seed is None else seed))
    params = {}
    for name, shape in parameter_layout(cfg):
        leaf = name.rsplit(".", 1)[1]
        if leaf in ("alpha", "gamma"):
            params[name] = np.ones(shape)
        elif leaf in ("beta", "bias"):
            params[name] = np.zeros(shape)
        else:
            bound = np.sqrt(1.0 / shape[1])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def _offsets(n, offsets):
    return np.array([0, n]) if offsets is None else np.asarray(offsets)


def _segment_sum(x, offsets):
    return np.add.reduceat(x, offsets[:-1], axis=0)


def _expand(stat, offsets):
    return np.repeat(stat, np.diff(offsets), axis=0)


def _reduce_to(g, shape):
    return g.sum(axis=-1, keepdims=True) if shape == (1,) and g.shape != (1,) else g


def leaky_relu(x, slope):
    return np.where(x > 0, x, slope * x)


# -- graph norm -------------------------------------------------------------

def graph_norm(x, alpha, gamma, beta, offsets=None, eps=1e-5, *, return_cache=False):
    """Per-graph, per-channel normalization with a learnable mean shift.

    ``s = x - alpha * mean(x)``, ``out = gamma * s / sqrt(mean(s^2) + eps) + beta``
    with both means taken over the nodes of each graph.
    """
    offsets = _offsets(x.shape[0], offsets)
    counts = np.diff(offsets)[:, None]
    mean = _segment_sum(x, offsets) / counts
    s = x - alpha * _expand(mean, offsets)
    var = _segment_sum(s * s, offsets) / counts
    inv = 1.0 / np.sqrt(var + eps)
    shat = s * _expand(inv, offsets)
    out = gamma * shat + beta
    if return_cache:
        return out, (offsets, counts, mean, s, inv, shat, alpha, gamma)
    return out


def graph_norm_backward(dout, cache):
    offsets, counts, mean, s, inv, shat, alpha, gamma = cache
    dgamma = _reduce_to((dout * shat).sum(axis=0), gamma.shape)
    dbeta = _reduce_to(dout.sum(axis=0), gamma.shape)
    dshat = dout * gamma
    dinv = _segment_sum(dshat * s, offsets)
    dvar = -0.5 * dinv * inv**3
    ds = dshat * _expand(inv, offsets) + 2.0 * s * _expand(dvar / counts, offsets)
    ds_sum = _segment_sum(ds, offsets)
    dalpha = _reduce_to(-(ds_sum * mean).sum(axis=0), alpha.shape)
    dx = ds + _expand(-alpha * ds_sum / counts, offsets)
    return dx, dalpha, dgamma, dbeta


# -- graph conv -------------------------------------------------------------

def _as_operator(A):
    return A.csr if isinstance(A, SparseSymMatrix) else A


def graph_conv(A, x, theta1, theta2, bias, *, return_cache=False):
    """``x theta1^T + (A x) theta2^T + bias``."""
    A = _as_operator(A)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"matrix of shape {A.shape} does not match {x.shape[0]} node rows")
    agg = A @ x
    out = x @ theta1.T + agg @ theta2.T + bias
    if return_cache:
        return out, (A, x, agg, theta1, theta2)
    return out


def graph_conv_backward(dout, cache):
    A, x, agg, theta1, theta2 = cache
    dtheta1 = dout.T @ x
    dtheta2 = dout.T @ agg
    dbias = dout.sum(axis=0)
    # A is symmetric, so A^T (dout theta2) = A (dout theta2)
    dx = dout @ theta1 + A @ (dout @ theta2)
    return dx, dtheta1, dtheta2, dbias


# -- residual block ---------------------------------------------------------

def _block(params, k):
    p = f"blocks.{k}."
    return {name[len(p):]: v for name, v in params.items() if name.startswith(p)}


def residual_block(A, x, block_params, offsets=None, slope=0.01, eps=1e-5, *, return_cache=False):
    """``x + conv2(leaky(conv1(graph_norm(x))))``."""
    bp = block_params
    z, c_norm = graph_norm(x, bp["norm.alpha"], bp["norm.gamma"], bp["norm.beta"], offsets, eps, return_cache=True)
    u, c_conv1 = graph_conv(A, z, bp["conv1.theta1"], bp["conv1.theta2"], bp["conv1.bias"], return_cache=True)
    a = leaky_relu(u, slope)
    v, c_conv2 = graph_conv(A, a, bp["conv2.theta1"], bp["conv2.theta2"], bp["conv2.bias"], return_cache=True)
    out = x + v
    if return_cache:
        return out, (c_norm, c_conv1, u, c_conv2, slope)
    return out


def residual_block_backward(dout, cache):
    c_norm, c_conv1, u, c_conv2, slope = cache
    g = {}
    da, g["conv2.theta1"], g["conv2.theta2"], g["conv2.bias"] = graph_conv_backward(dout, c_conv2)
    du = da * np.where(u > 0, 1.0, slope)
    dz, g["conv1.theta1"], g["conv1.theta2"], g["conv1.bias"] = graph_conv_backward(du, c_conv1)
    dx, g["norm.alpha"], g["norm.gamma"], g["norm.beta"] = graph_norm_backward(dz, c_norm)
    return dout + dx, g


# -- full network -----------------------------------------------------------

def forward_with_cache(A, F, params, cfg, offsets=None):
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[1] != cfg.d_in:
        raise ValueError(f"features of shape {F.shape} do not match d_in={cfg.d_in}")
    A = _as_operator(A)
    offsets = _offsets(F.shape[0], offsets)
    h = F @ params["encoder.weight"].T + params["encoder.bias"]
    block_caches = []
    for k in range(cfg.num_blocks):
        h, c = residual_block(A, h, _block(params, k), offsets, cfg.leaky_slope, cfg.norm_epsilon, return_cache=True)
        block_caches.append(c)
    p = h @ params["decoder.0.weight"].T + params["decoder.0.bias"]
    q = leaky_relu(p, cfg.leaky_slope)
    y = q @ params["decoder.1.weight"].T + params["decoder.1.bias"]
    return y[:, 0], (F, block_caches, h, p, q)


def forward(A, F, params, cfg, offsets=None):
    """Predicted solution direction, one value per node."""
    return forward_with_cache(A, F, params, cfg, offsets)[0]


def backward_from_output(dy, cache, params, cfg):
    """Gradients of a scalar loss w.r.t. every parameter, given ``dloss/doutput``."""
    F, block_caches, h, p, q = cache
    grads = {}
    dy = np.asarray(dy, dtype=np.float64)[:, None]
    grads["decoder.1.weight"] = dy.T @ q
    grads["decoder.1.bias"] = dy.sum(axis=0)
    dq = dy @ params["decoder.1.weight"]
    dp = dq * np.where(p > 0, 1.0, cfg.leaky_slope)
    grads["decoder.0.weight"] = dp.T @ h
    grads["decoder.0.bias"] = dp.sum(axis=0)
    dh = dp @ params["decoder.0.weight"]
    for k in reversed(range(cfg.num_blocks)):
        dh, g = residual_block_backward(dh, block_caches[k])
        for name, v in g.items():
            grads[f"blocks.{k}.{name}"] = v
    grads["encoder.weight"] = dh.T @ F
    grads["encoder.bias"] = dh.sum(axis=0)
    return {name: grads[name] for name, _ in parameter_layout(cfg)}
