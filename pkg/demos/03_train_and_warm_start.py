"""
Training a small solver and using it as a warm start
====================================================

A short run on a few hundred diffusion problems. It is far from converged,
but it shows the full loop: generate data, train, evaluate, and seed the
conjugate gradient method with the network's answer. Takes about half a
minute on one core.
"""

import time

from threadpoolctl import threadpool_limits

from graphsolver.augment import AugmentationConfig
from graphsolver.dataset import generate_grid_dataset, make_splits
from graphsolver.evaluation import evaluate, hybrid_bench
from graphsolver.inference import NeuralSolver
from graphsolver.model import ModelConfig
from graphsolver.training import TrainConfig, train

threadpool_limits(1)

# %% Data: 5-point stencils with random conductivities, 50-200 unknowns
samples = generate_grid_dataset(400, (50, 200), seed=1)
splits = make_splits(samples, (0.8, 0.1, 0.1), seed=1)
print({k: len(v) for k, v in splits.items()})

# %% Train
aug = AugmentationConfig()  # b, diagonal and 14 CG iterates
cfg = ModelConfig(d_in=aug.d_in, d=32, num_blocks=4, seed=1)
t0 = time.perf_counter()
params, log = train(splits["train"], splits["val"], TrainConfig(epochs=15, seed=1), cfg, aug)
print(f"trained in {time.perf_counter() - t0:.0f}s")
for row in log.split("val")[::3]:
    print(f"  epoch {row['epoch']:2d}  val loss {row['total']:.4f}  val delta {100 * row['delta']:.1f}%")

# %% Accuracy on held-out systems
solver = NeuralSolver(params, cfg, aug)
report = evaluate(solver, splits["test"])
print(f"\ntest: mean delta {100 * report.mean_delta:.1f}%, mean eps {report.mean_eps:.3e}")

# %% Warm-starting conjugate gradient
for row in hybrid_bench(solver, splits["test"], (1e-2, 1e-4)):
    print(f"iterations to delta={row['delta']:g}: zero start {row['zero_init_mean']:.1f}, "
          f"network start {row['nsls_init_mean']:.1f} ({row['reduction_pct']:+.1f}%)")
