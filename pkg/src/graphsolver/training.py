"""Losses, gradients, Adam and the training loop.

The network output ``x_tilde`` only carries a direction, so both loss terms
are cosine distances:

* ``loss_cos = 1 - cos(x_tilde, x)`` against the ground truth;
* ``loss_res = 1 - cos(A_bar x_tilde, b_bar)`` in residual space, which
  keeps the least-squares scale estimate well defined on ill-conditioned
  systems.

A batch loss is the mean of per-graph losses over the graphs where both
terms are defined.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .augment import AugmentationConfig, build_features
from .dataset import generate_grid_system, make_rng
from .model import (
    GraphBatch,
    ModelConfig,
    backward_from_output,
    forward_with_cache,
    init_parameters,
    parameter_layout,
)
from .scaling import normalize_system
from .sparse import spmv

__all__ = [
    "LossBreakdown",
    "DegenerateLossError",
    "loss_cos",
    "loss_res",
    "PreparedSample",
    "prepare_sample",
    "prepare_samples",
    "TrainBatch",
    "collate",
    "batch_loss",
    "backward",
    "AdamState",
    "adam_step",
    "TrainConfig",
    "learning_rate",
    "TrainingLog",
    "train",
    "evaluate_prepared",
    "GradCheckReport",
    "grad_check",
]

log = logging.getLogger(__name__)


class DegenerateLossError(ValueError):
    pass


@dataclass(frozen=True)
class LossBreakdown:
    loss_cos: float
    loss_res: float

    @property
    def total(self):
        return self.loss_cos + self.loss_res


def _cosine_distance(u, v, what):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateLossError(f"{what}: cosine distance undefined for a zero vector")
    return float(1.0 - (u @ v) / (nu * nv))


def loss_cos(x_tilde, x):
    return _cosine_distance(np.asarray(x_tilde, float), np.asarray(x, float), "loss_cos")


def loss_res(A_bar, b_bar, x_tilde):
    return _cosine_distance(spmv(A_bar, np.asarray(x_tilde, float)), np.asarray(b_bar, float), "loss_res")


# -- prepared data ------------------------------------------------------------

@dataclass(eq=False)
class PreparedSample:
    """A sample with its scaled system and node features precomputed."""

    scaled: object
    features: np.ndarray
    x: np.ndarray
    meta: dict = field(default_factory=dict)


def prepare_sample(sample, aug_cfg):
    s = normalize_system(sample.A, sample.b)
    feats = build_features(s.matrix, s.rhs, aug_cfg).values
    return PreparedSample(s, feats, np.asarray(sample.x, dtype=np.float64), dict(sample.meta))


def prepare_samples(samples, aug_cfg):
    return [prepare_sample(s, aug_cfg) for s in samples]


@dataclass(eq=False)
class TrainBatch:
    graphs: GraphBatch
    features: np.ndarray
    x: np.ndarray
    matrix_scale: np.ndarray
    rhs_scale: np.ndarray


def collate(prepared):
    systems = [p.scaled for p in prepared]
    return TrainBatch(
        GraphBatch.from_systems(systems),
        np.vstack([p.features for p in prepared]),
        np.concatenate([p.x for p in prepared]),
        np.array([s.matrix_scale for s in systems]),
        np.array([s.rhs_scale for s in systems]),
    )


# -- batch loss ---------------------------------------------------------------

def _segment_dot(u, v, offsets):
    return np.add.reduceat(u * v, offsets[:-1])


def _segment_cosine(u, v, offsets):
    """Per-graph cosine distance and its gradient w.r.t. ``u``; NaN where undefined."""
    uv = _segment_dot(u, v, offsets)
    nu = np.sqrt(_segment_dot(u, u, offsets))
    nv = np.sqrt(_segment_dot(v, v, offsets))
    valid = (nu > 0) & (nv > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = uv / (nu * nv)
        counts = np.diff(offsets)
        a = np.repeat(1.0 / (nu * nv), counts)
        c = np.repeat(cos / nu**2, counts)
        grad = -(v * a - u * c)
    return 1.0 - cos, grad, valid, uv, nu


@dataclass
class BatchResult:
    loss: LossBreakdown
    per_graph_cos: np.ndarray
    per_graph_res: np.ndarray
    valid: np.ndarray
    grad_output: np.ndarray
    x_hat: np.ndarray


def batch_loss(batch, x_tilde, use_res=True):
    """Mean batch loss, its gradient w.r.t. ``x_tilde`` and the recovered ``x_hat``.

    Graphs where a cosine term is undefined (zero prediction, zero
    ``A_bar x_tilde`` or zero ground truth) are left out of the mean and
    logged. Raises :class:`DegenerateLossError` when no graph is usable.
    """
    g = batch.graphs
    off = g.offsets
    counts = np.diff(off)
    w = g.matrix @ x_tilde
    lc, gc, vc, _, _ = _segment_cosine(x_tilde, batch.x, off)
    lr_, gr, vr, wb, nw = _segment_cosine(w, g.rhs, off)
    valid = vc & (vr if use_res else True)
    if not valid.any():
        raise DegenerateLossError("every graph in the batch has a degenerate loss")
    if not valid.all():
        log.warning("skipping %d degenerate graph(s) in batch", int((~valid).sum()))
    weight = np.where(valid, 1.0 / valid.sum(), 0.0)
    wn = np.repeat(weight, counts)
    grad = np.where(wn > 0, gc * wn, 0.0)
    if use_res:
        grad = grad + g.matrix @ np.where(wn > 0, gr * wn, 0.0)
    mean_cos = float(np.sum(np.where(valid, lc, 0.0) * weight))
    mean_res = float(np.sum(np.where(valid, lr_, 0.0) * weight)) if use_res else 0.0
    # least-squares scale per graph, then undo the normalization
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(nw > 0, wb / nw / nw, 0.0)
        factor = np.where(batch.matrix_scale > 0, mu * batch.rhs_scale / batch.matrix_scale, 0.0)
    x_hat = x_tilde * np.repeat(factor, counts)
    return BatchResult(LossBreakdown(mean_cos, mean_res), lc, lr_, valid, grad, x_hat)


def backward(batch, params, cfg, use_res=True):
    """``(LossBreakdown, gradients)`` of the mean batch loss w.r.t. every parameter."""
    out, cache = forward_with_cache(batch.graphs.matrix, batch.features, params, cfg, batch.graphs.offsets)
    res = batch_loss(batch, out, use_res)
    grads = backward_from_output(res.grad_output, cache, params, cfg)
    return res.loss, grads


# -- optimizer ----------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params, **kw):
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()}, **kw)


def adam_step(params, grads, state, lr):
    """Bias-corrected Adam update, in place; no weight decay. Returns ``(params, state)``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-3
    drop_fractions: tuple = (0.8, 0.9)
    drop_factor: float = 10.0
    use_res: bool = True
    seed: int = 0
    eval_batch_size: int = 64

    def to_dict(self):
        return asdict(self)


def learning_rate(epoch, cfg):
    """Step schedule: divide by ``drop_factor`` at each fraction of the epoch budget (40/45 of 50 by default)."""
    drops = [int(round(f * cfg.epochs)) for f in cfg.drop_fractions]
    return cfg.lr / cfg.drop_factor ** sum(epoch >= d for d in drops)


LOG_COLUMNS = ("epoch", "split", "loss_cos", "loss_res", "total", "eps", "delta", "lr")


class TrainingLog:
    """Per-epoch metrics; optionally mirrored to an append-only CSV file."""

    def __init__(self, path=None):
        self.rows = []
        self.path = path
        if path is not None:
            with open(path, "a", newline="") as fh:
                if fh.tell() == 0:
                    csv.writer(fh).writerow(LOG_COLUMNS)

    def append(self, row):
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a", newline="") as fh:
                csv.writer(fh).writerow([row[c] for c in LOG_COLUMNS])

    def split(self, name):
        return [r for r in self.rows if r["split"] == name]


def _metrics(x_hat, x, offsets):
    counts = np.diff(offsets)
    err = x - x_hat
    eps = np.add.reduceat(np.abs(err), offsets[:-1]) / counts
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.sqrt(_segment_dot(err, err, offsets)) / np.sqrt(_segment_dot(x, x, offsets))
    return eps, delta


def evaluate_prepared(prepared, params, cfg, use_res=True, batch_size=64):
    """Mean loss terms and metrics of a parameter set over prepared samples."""
    sums = dict(loss_cos=0.0, loss_res=0.0, eps=0.0, delta=0.0)
    n_loss = n_metric = 0
    for start in range(0, len(prepared), batch_size):
        batch = collate(prepared[start:start + batch_size])
        out, _ = forward_with_cache(batch.graphs.matrix, batch.features, params, cfg, batch.graphs.offsets)
        res = batch_loss(batch, out, use_res)
        k = int(res.valid.sum())
        sums["loss_cos"] += res.loss.loss_cos * k
        sums["loss_res"] += res.loss.loss_res * k
        n_loss += k
        eps, delta = _metrics(res.x_hat, batch.x, batch.graphs.offsets)
        sums["eps"] += eps.sum()
        sums["delta"] += delta.sum()
        n_metric += eps.size
    out = {k: sums[k] / (n_loss if k.startswith("loss") else n_metric) for k in sums}
    out["total"] = out["loss_cos"] + out["loss_res"]
    return out


def train(train_samples, val_samples=None, train_cfg=None, model_cfg=None, aug_cfg=None, *,
          log_path=None, params=None, prepared=False):
    """Train a network; returns ``(params, TrainingLog)``.

    Samples may be raw :class:`LinearSystemSample` objects or, with
    ``prepared=True``, :class:`PreparedSample` objects whose features were
    built with ``aug_cfg``. Every step runs scale, augment (cached), batch,
    forward, loss, backward and an Adam update. Runs are bitwise
    reproducible for a fixed seed with a single BLAS thread.
    """
    train_cfg = train_cfg or TrainConfig()
    aug_cfg = aug_cfg or AugmentationConfig()
    model_cfg = model_cfg or ModelConfig(d_in=aug_cfg.d_in, num_blocks=4)
    if model_cfg.d_in != aug_cfg.d_in:
        raise ValueError(f"model d_in={model_cfg.d_in} does not match feature width {aug_cfg.d_in}")
    if not train_samples:
        raise ValueError("training split is empty")
    tr = list(train_samples) if prepared else prepare_samples(train_samples, aug_cfg)
    va = None
    if val_samples:
        va = list(val_samples) if prepared else prepare_samples(val_samples, aug_cfg)
    params = init_parameters(model_cfg) if params is None else {k: v.copy() for k, v in params.items()}
    state = AdamState.create(params)
    rng = make_rng(train_cfg.seed)
    history = TrainingLog(log_path)
    bs = train_cfg.batch_size
    for epoch in range(train_cfg.epochs):
        lr = learning_rate(epoch, train_cfg)
        order = rng.permutation(len(tr))
        sums = np.zeros(4)
        n_valid = n_graphs = 0
        for start in range(0, len(tr), bs):
            batch = collate([tr[i] for i in order[start:start + bs]])
            out, cache = forward_with_cache(batch.graphs.matrix, batch.features, params, model_cfg, batch.graphs.offsets)
            res = batch_loss(batch, out, train_cfg.use_res)
            grads = backward_from_output(res.grad_output, cache, params, model_cfg)
            adam_step(params, grads, state, lr)
            eps, delta = _metrics(res.x_hat, batch.x, batch.graphs.offsets)
            k = int(res.valid.sum())
            sums += [res.loss.loss_cos * k, res.loss.loss_res * k, eps.sum(), delta.sum()]
            n_valid += k
            n_graphs += eps.size
        lc, lr_sum, e, d = sums / [n_valid, n_valid, n_graphs, n_graphs]
        history.append(dict(epoch=epoch, split="train", loss_cos=lc, loss_res=lr_sum, total=lc + lr_sum,
                            eps=e, delta=d, lr=lr))
        if va:
            m = evaluate_prepared(va, params, model_cfg, train_cfg.use_res, train_cfg.eval_batch_size)
            history.append(dict(epoch=epoch, split="val", lr=lr, **m))
        log.info("epoch %d lr %.1e train loss %.4f delta %.4f", epoch, lr, lc + lr_sum, d)
    return params, history


# -- gradient check -------------------------------------------------------------

@dataclass
class GradCheckReport:
    errors: dict
    threshold: float

    @property
    def passed(self):
        return all(e < self.threshold for e in self.errors.values())

    @property
    def failed_groups(self):
        return [k for k, e in self.errors.items() if not e < self.threshold]

    @property
    def max_error(self):
        return max(self.errors.values())

    def format(self):
        lines = [f"{name:32s} {err:.3e} {'ok' if err < self.threshold else 'FAIL'}" for name, err in self.errors.items()]
        lines.append(f"max relative error {self.max_error:.3e} (threshold {self.threshold:.0e}): "
                     f"{'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def grad_check(model_cfg=None, seed=0, *, n_rows=3, n_cols=4, step=1e-6, threshold=1e-4,
               aug_cfg=None, backward_fn=None, use_res=True):
    """Compare :func:`backward` with central finite differences on a tiny random instance.

    The default instance is a 3 x 4 grid system (12 nodes) with a 4-wide,
    2-block network. Norm parameters and biases are jittered away from their
    initial values so every gradient is probed at a generic point. The error
    of a parameter group is ``max|analytic - numeric| / max(|analytic|, |numeric|)``
    over the group.
    """
    aug_cfg = aug_cfg or AugmentationConfig(cg_steps=2)
    model_cfg = model_cfg or ModelConfig(d_in=aug_cfg.d_in, d=4, num_blocks=2, seed=seed)
    backward_fn = backward_fn or backward
    rng = make_rng(seed + 1_000_003)
    sample = generate_grid_system(n_rows, n_cols, seed=seed)
    batch = collate([prepare_sample(sample, aug_cfg)])
    params = init_parameters(model_cfg, seed)
    for name, p in params.items():
        leaf = name.rsplit(".", 1)[1]
        if leaf in ("alpha", "gamma", "beta", "bias"):
            p += rng.uniform(-0.3, 0.3, p.shape)

    def f(ps):
        return backward(batch, ps, model_cfg, use_res)[0].total

    _, analytic = backward_fn(batch, params, model_cfg, use_res)
    errors = {}
    for name, _ in parameter_layout(model_cfg):
        p = params[name]
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + step
            fp = f(params)
            p[idx] = orig - step
            fm = f(params)
            p[idx] = orig
            numeric[idx] = (fp - fm) / (2 * step)
        scale = max(np.max(np.abs(analytic[name])), np.max(np.abs(numeric)), 1e-12)
        errors[name] = float(np.max(np.abs(analytic[name] - numeric)) / scale)
    return GradCheckReport(errors, threshold)
