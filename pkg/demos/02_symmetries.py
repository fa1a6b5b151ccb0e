"""
Two symmetries the solver respects
==================================

Relabeling the unknowns of a system permutes its solution, and rescaling A
or b rescales the solution. An approximate solver built from message passing
on the scaled system inherits both properties. Here we check them numerically
with an untrained network, since neither depends on the weights.
"""

import numpy as np

from graphsolver.dataset import generate_grid_system
from graphsolver.inference import NeuralSolver
from graphsolver.sparse import permute, permute_vec

sample = generate_grid_system(8, 12, seed=3)
A, b = sample.A, sample.b
solver = NeuralSolver.initialize(seed=0, d=32, num_blocks=4)
x_hat = solver.solve(A, b).solution

# %% Relabeling nodes
rng = np.random.default_rng(0)
p = rng.permutation(A.n)
x_perm = solver.solve(permute(A, p), permute_vec(b, p)).solution
print("max |solve(PAP', Pb) - P solve(A, b)|:", np.abs(x_perm - permute_vec(x_hat, p)).max())

# %% Rescaling
# Powers of two change only the exponent, so the scaled system is bitwise
# identical and the answer scales exactly.
c, d = 2.0 ** -20, 2.0 ** 7
x_scaled = solver.solve(A.scaled(c), b * d).solution
print("max relative |x(cA, db) - (d/c) x(A, b)|:",
      np.abs(x_scaled - d / c * x_hat).max() / np.abs(d / c * x_hat).max())

# Other factors perturb the scaled system at the rounding level; the result
# still agrees to many digits.
c, d = 3.7, 0.21
x_scaled = solver.solve(A.scaled(c), b * d).solution
print("same with c=3.7, d=0.21:",
      np.abs(x_scaled - d / c * x_hat).max() / np.abs(d / c * x_hat).max())

# %% Even an untrained network points somewhere useful
# The recovered magnitude is the least-squares optimum along the predicted
# direction, so the residual can never exceed that of the zero vector.
res = np.linalg.norm(A @ x_hat - b) / np.linalg.norm(b)
print(f"relative residual of an untrained prediction: {res:.3f} (zero vector: 1.000)")
