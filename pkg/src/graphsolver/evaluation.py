"""Accuracy metrics, evaluation and benchmark tables.

``eps`` is the mean absolute element-wise error and ``delta`` the Euclidean
relative error of an approximate solution against the ground truth. All
tables are plain CSV with a fixed column order.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .augment import AugmentationConfig
from .dataset import load_manifest_samples
from .inference import NeuralSolver
from .model import ModelConfig
from .solvers import conjugate_gradient
from .training import TrainConfig, prepare_samples, train

__all__ = [
    "metric_eps",
    "metric_delta",
    "EvalReport",
    "evaluate",
    "evaluate_checkpoint",
    "TABLE2_ROWS",
    "ablation_run",
    "iterations_to_targets",
    "hybrid_bench",
    "timing_bench",
    "write_csv",
]


def metric_eps(x_hat, x):
    x_hat, x = np.asarray(x_hat, float), np.asarray(x, float)
    if x_hat.shape != x.shape:
        raise ValueError("length mismatch")
    return float(np.sum(np.abs(x - x_hat)) / x.size)


def metric_delta(x_hat, x):
    x_hat, x = np.asarray(x_hat, float), np.asarray(x, float)
    if x_hat.shape != x.shape:
        raise ValueError("length mismatch")
    nx = np.linalg.norm(x)
    if nx == 0.0:
        raise ValueError("relative error undefined for a zero reference solution")
    return float(np.linalg.norm(x - x_hat) / nx)


@dataclass
class EvalReport:
    eps: np.ndarray
    delta: np.ndarray
    times: np.ndarray
    dataset_id: str = ""
    checkpoint_id: str = ""
    traces: list = field(default_factory=list)

    @property
    def mean_eps(self):
        return float(np.mean(self.eps))

    @property
    def mean_delta(self):
        return float(np.mean(self.delta))

    def rows(self):
        return [dict(sample=i, eps=e, delta=d, time=t) for i, (e, d, t) in enumerate(zip(self.eps, self.delta, self.times))]


def evaluate(solver, samples, *, dataset_id="", checkpoint_id="", trace=False):
    """Run the full inference pipeline on every sample and score it.

    ``solver`` is anything with ``solve(A, b, trace=...)`` returning an
    object with a ``solution`` attribute, e.g. :class:`NeuralSolver`.
    """
    eps, delta, times, traces = [], [], [], []
    for s in samples:
        t0 = time.perf_counter()
        res = solver.solve(s.A, s.b, trace=trace)
        times.append(time.perf_counter() - t0)
        eps.append(metric_eps(res.solution, s.x))
        delta.append(metric_delta(res.solution, s.x))
        if trace:
            traces.append(res.trace)
    return EvalReport(np.array(eps), np.array(delta), np.array(times), dataset_id, checkpoint_id, traces)


def evaluate_checkpoint(checkpoint, manifest, *, trace=False):
    solver = NeuralSolver.load(checkpoint)
    samples = load_manifest_samples(manifest)
    return evaluate(solver, samples, dataset_id=str(manifest), checkpoint_id=str(checkpoint), trace=trace)


# the seven loss/augmentation combinations of the ablation table
TABLE2_ROWS = (
    ("cos", "none"),
    ("cos+res", "none"),
    ("cos+res", "arnoldi"),
    ("cos+res", "jacobi"),
    ("cos+res", "cg"),
    ("cos+res", "cg+arnoldi"),
    ("cos+res", "cg+jacobi"),
)


def ablation_run(rows, train_samples, val_samples, test_samples, model_cfg=None, train_cfg=None, steps=14):
    """Train one model per ``(loss, preset)`` row under a shared seed and budget.

    ``loss`` is ``"cos"`` or ``"cos+res"``; ``preset`` names an
    augmentation preset. Returns rows ``{loss, augmentation, eps, delta}``
    scored on ``test_samples``.
    """
    if not rows:
        raise ValueError("no ablation rows given")
    train_cfg = train_cfg or TrainConfig()
    template = model_cfg or ModelConfig(d_in=1, num_blocks=4)
    out = []
    for loss, preset in rows:
        if loss not in ("cos", "cos+res"):
            raise ValueError(f"unknown loss {loss!r}")
        aug = AugmentationConfig.preset(preset, steps)
        cfg = replace(template, d_in=aug.d_in)
        tcfg = replace(train_cfg, use_res=(loss == "cos+res"))
        params, _ = train(prepare_samples(train_samples, aug), prepare_samples(val_samples, aug) if val_samples else None,
                          tcfg, cfg, aug, prepared=True)
        report = evaluate(NeuralSolver(params, cfg, aug), test_samples)
        out.append(dict(loss=loss, augmentation=preset, eps=report.mean_eps, delta=report.mean_delta))
    return out


def iterations_to_targets(A, b, x, x0, targets, max_iter):
    """Conjugate gradient iterations until ``||x_k - x|| / ||x||`` first drops below each target.

    ``None`` marks a target that was not reached within ``max_iter``.
    """
    rep = conjugate_gradient(A, b, x0, min(targets), max_iter, x_ref=x, record_history=True)
    err = np.asarray(rep.error_history)
    out = []
    for t in targets:
        hit = np.flatnonzero(err <= t)
        out.append(int(hit[0]) if hit.size else None)
    return out


def hybrid_bench(solver, samples, delta_targets=(1e-2, 1e-3, 1e-4, 1e-5), max_iter=None):
    """Mean and median CG iterations to each relative error, from zero and from the network's guess."""
    targets = list(delta_targets)
    if any(t <= 0 for t in targets) or targets != sorted(targets, reverse=True):
        raise ValueError("targets must be positive and descending")
    zero = np.full((len(samples), len(targets)), np.nan)
    warm = np.full_like(zero, np.nan)
    for i, s in enumerate(samples):
        cap = max_iter or 20 * s.n
        x_hat = solver.solve(s.A, s.b).solution
        for j, (kz, kw) in enumerate(zip(iterations_to_targets(s.A, s.b, s.x, None, targets, cap),
                                         iterations_to_targets(s.A, s.b, s.x, x_hat, targets, cap))):
            zero[i, j] = np.nan if kz is None else kz
            warm[i, j] = np.nan if kw is None else kw
    rows = []
    for j, t in enumerate(targets):
        ok = ~np.isnan(zero[:, j]) & ~np.isnan(warm[:, j])
        zm = float(np.mean(zero[ok, j])) if ok.any() else float("nan")
        wm = float(np.mean(warm[ok, j])) if ok.any() else float("nan")
        rows.append(dict(
            delta=t,
            zero_init_mean=zm,
            nsls_init_mean=wm,
            reduction_pct=100.0 * (wm - zm) / zm if zm > 0 else 0.0,
            zero_init_median=float(np.median(zero[ok, j])) if ok.any() else float("nan"),
            nsls_init_median=float(np.median(warm[ok, j])) if ok.any() else float("nan"),
            unconverged=int((~ok).sum()),
        ))
    return rows


def _median_time(fn, warmup, repeats):
    for _ in range(warmup):
        fn()
    ts = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts))


TIMING_NOTE = "wall-clock seconds on this machine; not comparable to published GPU timings"


def timing_bench(solver, samples, delta_target=None, warmup=3, repeats=10, max_iter=None):
    """Network inference time against CG time to the same relative error.

    With ``delta_target=None`` CG is run to the relative error the network
    reached on that sample.
    """
    rows = []
    for i, s in enumerate(samples):
        x_hat = solver.solve(s.A, s.b).solution
        nsls_delta = metric_delta(x_hat, s.x)
        target = nsls_delta if delta_target is None else delta_target
        cap = max_iter or 20 * s.n
        rep = conjugate_gradient(s.A, s.b, None, target, cap, x_ref=s.x)
        rows.append(dict(
            sample=i,
            n=s.n,
            nsls_delta=nsls_delta,
            target_delta=target,
            cg_iterations=rep.iterations,
            cg_delta=metric_delta(rep.solution, s.x),
            cg_converged=rep.converged,
            nsls_time=_median_time(lambda: solver.solve(s.A, s.b), warmup, repeats),
            cg_time=_median_time(lambda: conjugate_gradient(s.A, s.b, None, target, cap, x_ref=s.x), warmup, repeats),
        ))
    return rows


def write_csv(path, rows, columns=None, comment=None):
    columns = list(columns or (rows[0].keys() if rows else []))
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({c: r[c] for c in columns})
    return path
