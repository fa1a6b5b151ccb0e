"""
A linear system as a graph
==========================

A symmetric matrix is the weighted adjacency matrix of an undirected graph:
off-diagonal entries are edges, diagonal entries are self-loops, and the
right-hand side lives on the nodes. This script walks through that view on
a five-node example.
"""

import numpy as np

from graphsolver.augment import AugmentationConfig, build_features
from graphsolver.graph import from_system
from graphsolver.scaling import normalize_system
from graphsolver.sparse import SparseSymMatrix, condition_estimate, graph_diameter

A = SparseSymMatrix.from_dense([
    [1.0, 0.5, 0.0, 0.0, 0.0],
    [0.5, 2.2, 4.1, 0.0, 1.2],
    [0.0, 4.1, -1.5, 2.0, 0.0],
    [0.0, 0.0, 2.0, 3.6, -0.8],
    [0.0, 1.2, 0.0, -0.8, -0.1],
])
b = np.array([2.7, -1.1, -2.6, 5.4, 4.8])

# %% The graph listing (1-based labels)
print(from_system(A, b).dump())

# %% Shape of the problem
# Message passing needs roughly one hop per unit of graph diameter before
# every node has heard from every other node.
print("\ndiameter:", graph_diameter(A))
est = condition_estimate(A)
print(f"condition estimate: {est.kappa:.3g} (converged={est.converged})")
# The smallest eigenvalue comes from inverse iteration with conjugate
# gradient inner solves. This matrix is indefinite, CG breaks down, and the
# estimate comes back flagged as unconverged. On SPD input both halves work.

# %% Canonical scaling
# Dividing by the largest absolute entry removes the overall magnitude of
# A and b. The network only ever sees this scaled system.
s = normalize_system(A, b)
print(f"\n||A||_max = {s.matrix_scale}, ||b||_max = {s.rhs_scale}")
print("scaled b:", np.round(s.rhs, 4))

# %% Node features
# Each node gets its b value, its diagonal entry and a few conjugate gradient
# iterates, every column rescaled to max-abs 1.
F = build_features(s.matrix, s.rhs, AugmentationConfig(cg_steps=3))
print("\nfeature columns:", F.labels)
print(np.round(F.values, 3))
