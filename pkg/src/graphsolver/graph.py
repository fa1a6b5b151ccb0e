"""Weighted undirected graph view of a sparse symmetric linear system.

Node ``i`` carries the scalar ``b_i`` and is joined to node ``j`` exactly
when ``a_ij != 0``; the edge weight is ``a_ij`` and the diagonal becomes a
self-loop. The conversion is lossless in both directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import DimensionMismatchError, SparseSymMatrix, check_permutation, permute, permute_vec

__all__ = ["SystemGraph", "from_system", "to_system", "permute_graph"]


@dataclass(frozen=True, eq=False)
class SystemGraph:
    n: int
    sources: np.ndarray  # edge endpoint u, u <= v
    targets: np.ndarray  # edge endpoint v
    weights: np.ndarray
    features: np.ndarray  # b_i per node
    matrix: SparseSymMatrix

    @property
    def num_edges(self):
        return int(self.weights.size)

    def self_loops(self):
        """Map node -> self-loop weight."""
        on = self.sources == self.targets
        return dict(zip(self.sources[on].tolist(), self.weights[on].tolist()))

    def cross_edges(self):
        """Map ``(u, v)`` with ``u < v`` -> weight."""
        off = self.sources != self.targets
        keys = zip(self.sources[off].tolist(), self.targets[off].tolist())
        return dict(zip(keys, self.weights[off].tolist()))

    def edge_multiset(self):
        """Sorted ``(u, v, w)`` triples; handy for label-free comparisons after relabeling."""
        return sorted(zip(self.sources.tolist(), self.targets.tolist(), self.weights.tolist()))

    def __eq__(self, other):
        if not isinstance(other, SystemGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.sources, other.sources)
            and np.array_equal(self.targets, other.targets)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None

    def dump(self):
        """Text listing of node features then weighted edges, with 1-based labels."""
        lines = [f"graph: {self.n} nodes, {self.num_edges} edges ({len(self.self_loops())} self-loops)"]
        lines.append("nodes:")
        for i, f in enumerate(self.features.tolist()):
            lines.append(f"  {i + 1}: {f!r}")
        lines.append("edges:")
        for u, v, w in zip(self.sources.tolist(), self.targets.tolist(), self.weights.tolist()):
            tag = "  (self-loop)" if u == v else ""
            lines.append(f"  {u + 1} -- {v + 1}: {w!r}{tag}")
        return "\n".join(lines)


def from_system(A, b):
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or b.shape[0] != A.n:
        raise DimensionMismatchError(f"b of shape {b.shape} does not match n={A.n}")
    b = b.copy()
    b.setflags(write=False)
    return SystemGraph(A.n, A.rows, A.cols, A.vals, b, A)


def to_system(g):
    A = SparseSymMatrix(g.n, g.sources, g.targets, g.weights)
    return A, np.array(g.features)


def permute_graph(g, perm):
    perm = check_permutation(perm, g.n)
    return from_system(permute(g.matrix, perm), permute_vec(g.features, perm))
