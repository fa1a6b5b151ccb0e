"""End-to-end approximate solve: scale, augment, predict direction, rescale."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentationConfig, build_features
from .checkpoint import load_checkpoint, save_checkpoint
from .model import GraphBatch, ModelConfig, forward, init_parameters
from .scaling import estimate_mu, normalize_system, recover_solution

__all__ = ["InferenceResult", "NeuralSolver", "neural_solve", "array_digest"]


def array_digest(a):
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    return hashlib.sha256(a.tobytes()).hexdigest()[:16]


@dataclass
class InferenceResult:
    solution: np.ndarray
    direction: np.ndarray
    mu: float
    degenerate: bool
    trace: dict = field(default_factory=dict)


def neural_solve(A, b, direction_fn, *, trace=False):
    """Run the pipeline with any ``direction_fn(scaled_system) -> x_tilde``.

    With ``trace=True`` the result records a short digest of every stage
    (scaled system, features if the direction function exposes them, raw
    output, ``mu`` and ``x_hat``) for auditing.
    """
    s = normalize_system(A, b)
    x_tilde = np.asarray(direction_fn(s), dtype=np.float64)
    mu, degenerate = estimate_mu(s, x_tilde)
    x_hat = recover_solution(s, x_tilde)
    stages = {}
    if trace:
        stages["scale"] = array_digest(np.concatenate([s.matrix.vals, s.rhs, [s.matrix_scale, s.rhs_scale]]))
        feats = getattr(direction_fn, "last_features", None)
        if feats is not None:
            stages["features"] = array_digest(feats)
        stages["forward"] = array_digest(x_tilde)
        stages["mu"] = array_digest([mu])
        stages["x_hat"] = array_digest(x_hat)
    return InferenceResult(x_hat, x_tilde, mu, degenerate, stages)


class _Direction:
    def __init__(self, solver):
        self.solver = solver
        self.last_features = None

    def __call__(self, s):
        feats = build_features(s.matrix, s.rhs, self.solver.aug_cfg).values
        self.last_features = feats
        return forward(s.matrix, feats, self.solver.params, self.solver.model_cfg)


class NeuralSolver:
    """A trained network plus the feature configuration it was trained with."""

    def __init__(self, params, model_cfg, aug_cfg):
        if aug_cfg.d_in != model_cfg.d_in:
            raise ValueError(f"augmentation width {aug_cfg.d_in} != model d_in {model_cfg.d_in}")
        self.params = params
        self.model_cfg = model_cfg
        self.aug_cfg = aug_cfg

    @classmethod
    def initialize(cls, aug_cfg=None, seed=0, **model_kw):
        aug_cfg = aug_cfg or AugmentationConfig()
        cfg = ModelConfig(d_in=aug_cfg.d_in, seed=seed, **model_kw)
        return cls(init_parameters(cfg), cfg, aug_cfg)

    @classmethod
    def load(cls, path):
        return cls(*load_checkpoint(path))

    def save(self, path):
        save_checkpoint(path, self.params, self.model_cfg, self.aug_cfg)

    def direction(self, s):
        return _Direction(self)(s)

    def direction_batch(self, systems, features=None):
        """Directions for several scaled systems in one block-diagonal forward pass."""
        batch = GraphBatch.from_systems(systems)
        if features is None:
            features = [build_features(s.matrix, s.rhs, self.aug_cfg).values for s in systems]
        out = forward(batch.matrix, np.vstack(features), self.params, self.model_cfg, batch.offsets)
        return batch.split(out)

    def solve(self, A, b, *, trace=False):
        return neural_solve(A, b, _Direction(self), trace=trace)
