"""Sparse symmetric matrix storage and the numerical kernels built on it.

A :class:`SparseSymMatrix` keeps the upper triangle (diagonal included) in
coordinate form and lazily builds a row-compressed index of the full
symmetric expansion. Products go through that index with column indices
sorted ascending inside every row, so the summation order is fixed and
repeated calls are bitwise reproducible.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

__all__ = [
    "SparseSymMatrix",
    "DimensionMismatchError",
    "InvalidPermutationError",
    "spmv",
    "spmm",
    "spmv_ordered",
    "dot_ordered",
    "max_abs_norm",
    "check_permutation",
    "inverse_permutation",
    "permute",
    "permute_vec",
    "graph_diameter",
    "graph_diameter_info",
    "ConditionEstimate",
    "condition_estimate",
]


class DimensionMismatchError(ValueError):
    pass


class InvalidPermutationError(ValueError):
    pass


class SparseSymMatrix:
    """Symmetric sparse matrix stored as its upper triangle.

    Entries are kept sorted by ``(row, col)`` with ``row <= col``; explicit
    zeros are dropped and duplicates rejected. Instances are treated as
    immutable: the arrays are flagged read-only after construction.
    """

    __slots__ = ("n", "rows", "cols", "vals", "_csr")

    def __init__(self, n, rows, cols, vals):
        n = int(n)
        if n < 0:
            raise ValueError("matrix size must be non-negative")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols and vals must have the same length")
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
            raise IndexError(f"entry index out of range for n={n}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("matrix entries must be finite")
        r = np.minimum(rows, cols)
        c = np.maximum(rows, cols)
        keep = vals != 0.0
        r, c, v = r[keep], c[keep], vals[keep]
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        if r.size > 1:
            dup = (r[1:] == r[:-1]) & (c[1:] == c[:-1])
            if np.any(dup):
                k = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate entry ({r[k]}, {c[k]})")
        for arr in (r, c, v):
            arr.setflags(write=False)
        self.n = n
        self.rows = r
        self.cols = c
        self.vals = v
        self._csr = None

    # -- constructors ---------------------------------------------------
    @classmethod
    def from_dense(cls, M, *, check_symmetric=True):
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("expected a square 2-D array")
        if check_symmetric and not np.array_equal(M, M.T):
            raise ValueError("matrix is not symmetric")
        r, c = np.nonzero(np.triu(M))
        return cls(M.shape[0], r, c, M[r, c])

    @classmethod
    def from_scipy(cls, S, *, check_symmetric=True):
        S = sp.coo_matrix(S)
        if S.shape[0] != S.shape[1]:
            raise ValueError("expected a square matrix")
        S.sum_duplicates()
        if check_symmetric and (S != S.T).nnz:
            raise ValueError("matrix is not symmetric")
        upper = S.row <= S.col
        return cls(S.shape[0], S.row[upper], S.col[upper], S.data[upper])

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls(n, idx, idx, np.ones(n))

    @classmethod
    def diag(cls, d):
        d = np.asarray(d, dtype=np.float64)
        idx = np.arange(d.size)
        return cls(d.size, idx, idx, d)

    # -- views ----------------------------------------------------------
    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def nnz(self):
        """Number of stored entries in the symmetric expansion."""
        return int(2 * self.vals.size - np.count_nonzero(self.rows == self.cols))

    @property
    def csr(self):
        """Row-compressed symmetric expansion with sorted column indices."""
        if self._csr is None:
            off = self.rows != self.cols
            r = np.concatenate([self.rows, self.cols[off]])
            c = np.concatenate([self.cols, self.rows[off]])
            v = np.concatenate([self.vals, self.vals[off]])
            m = sp.csr_matrix((v, (r, c)), shape=(self.n, self.n))
            m.sort_indices()
            for arr in (m.data, m.indices, m.indptr):
                arr.setflags(write=False)
            self._csr = m
        return self._csr

    def diagonal(self):
        d = np.zeros(self.n)
        on = self.rows == self.cols
        d[self.rows[on]] = self.vals[on]
        return d

    def to_dense(self):
        return self.csr.toarray()

    def scaled(self, factor):
        """Return ``self * factor`` (entries multiplied elementwise)."""
        return SparseSymMatrix(self.n, self.rows, self.cols, self.vals * factor)

    def divided(self, divisor):
        return SparseSymMatrix(self.n, self.rows, self.cols, self.vals / divisor)

    def __matmul__(self, other):
        other = np.asarray(other)
        if other.ndim == 1:
            return spmv(self, other)
        return spmm(self, other)

    def __eq__(self, other):
        if not isinstance(other, SparseSymMatrix):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.vals, other.vals)
        )

    __hash__ = None

    def __repr__(self):
        return f"SparseSymMatrix(n={self.n}, stored={self.vals.size}, nnz={self.nnz})"


def spmv(A, v):
    """Return ``A @ v`` over the symmetric expansion of ``A``."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != A.n:
        raise DimensionMismatchError(f"vector of shape {v.shape} does not match n={A.n}")
    return A.csr @ v


def spmv_ordered(A, v):
    """``A @ v`` with each row summed in ascending order of its terms.

    The result depends only on the multiset of products in a row, never on
    how nodes are labeled, so ``spmv_ordered(permute(A, p), permute_vec(v, p))``
    equals ``permute_vec(spmv_ordered(A, v), p)`` bit for bit. Slower than
    :func:`spmv`; meant for iterations that amplify rounding differences.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != A.n:
        raise DimensionMismatchError(f"vector of shape {v.shape} does not match n={A.n}")
    csr = A.csr
    counts = np.diff(csr.indptr)
    prod = csr.data * v[csr.indices]
    rows = np.repeat(np.arange(A.n), counts)
    prod = prod[np.lexsort((prod, rows))]
    out = np.zeros(A.n)
    nonempty = counts > 0
    if prod.size:
        out[nonempty] = np.add.reduceat(prod, csr.indptr[:-1][nonempty])
    return out


def dot_ordered(u, v):
    """Inner product summed in ascending order of the terms; invariant under joint relabeling."""
    return float(np.sort(np.asarray(u, dtype=np.float64) * np.asarray(v, dtype=np.float64)).sum())


def spmm(A, F):
    """Return ``A @ F`` for a dense ``n x k`` block; each column matches :func:`spmv`."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != A.n:
        raise DimensionMismatchError(f"matrix of shape {F.shape} does not match n={A.n}")
    return A.csr @ F


def max_abs_norm(x):
    """Largest absolute stored entry of a matrix or vector; 0 when empty or all-zero."""
    if isinstance(x, SparseSymMatrix):
        vals = x.vals
    elif sp.issparse(x):
        vals = x.data
    else:
        vals = np.asarray(x, dtype=np.float64)
    if vals.size == 0:
        return 0.0
    return float(np.max(np.abs(vals)))


def check_permutation(perm, n=None):
    perm = np.asarray(perm)
    if perm.ndim != 1 or (n is not None and perm.size != n):
        raise InvalidPermutationError(f"permutation must be a 1-D array of length {n}")
    if not np.issubdtype(perm.dtype, np.integer):
        raise InvalidPermutationError("permutation entries must be integers")
    seen = np.zeros(perm.size, dtype=bool)
    if perm.size and (perm.min() < 0 or perm.max() >= perm.size):
        raise InvalidPermutationError("permutation entry out of range")
    seen[perm] = True
    if not seen.all():
        raise InvalidPermutationError("permutation is not a bijection")
    return perm.astype(np.int64)


def inverse_permutation(perm):
    perm = check_permutation(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv


def permute(A, perm):
    """Relabel nodes: entry ``(i, j)`` of ``A`` moves to ``(perm[i], perm[j])``."""
    perm = check_permutation(perm, A.n)
    return SparseSymMatrix(A.n, perm[A.rows], perm[A.cols], A.vals)


def permute_vec(v, perm):
    """Return ``w`` with ``w[perm[i]] = v[i]``, i.e. ``P @ v``."""
    v = np.asarray(v)
    perm = check_permutation(perm, v.shape[0])
    out = np.empty_like(v)
    out[perm] = v
    return out


def _pattern_graph(A):
    off = A.rows != A.cols
    r, c = A.rows[off], A.cols[off]
    return sp.csr_matrix((np.ones(r.size), (r, c)), shape=(A.n, A.n))


def graph_diameter_info(A, *, exact_cap=2048, samples=16, seed=0):
    """Hop diameter of the largest connected component and whether it is exact.

    Components up to ``exact_cap`` nodes get a BFS from every node. Larger
    ones get double sweeps from ``samples`` random sources, which gives a
    lower bound.
    """
    if A.n == 0:
        return 0, True
    G = _pattern_graph(A)
    ncomp, labels = csgraph.connected_components(G, directed=False)
    largest = np.argmax(np.bincount(labels))
    nodes = np.flatnonzero(labels == largest)
    if nodes.size == 1:
        return 0, True
    sub = G[nodes][:, nodes]
    if nodes.size <= exact_cap:
        dist = csgraph.shortest_path(sub, directed=False, unweighted=True)
        return int(dist.max()), True
    rng = np.random.Generator(np.random.Philox(seed))
    best = 0
    for s in rng.choice(nodes.size, size=min(samples, nodes.size), replace=False):
        d = csgraph.shortest_path(sub, directed=False, unweighted=True, indices=[s])[0]
        far = int(np.argmax(d))
        d2 = csgraph.shortest_path(sub, directed=False, unweighted=True, indices=[far])[0]
        best = max(best, int(d.max()), int(d2.max()))
    return best, False


def graph_diameter(A, *, exact_cap=2048, samples=16, seed=0):
    """Hop diameter of the largest connected component (self-loops and weights ignored)."""
    return graph_diameter_info(A, exact_cap=exact_cap, samples=samples, seed=seed)[0]


class ConditionEstimate(NamedTuple):
    kappa: float
    lam_max: float
    lam_min: float
    converged: bool


def condition_estimate(A, tol=1e-8, max_iter=1000, seed=0):
    """Estimate ``|lambda_max| / |lambda_min|`` of a symmetric matrix.

    ``|lambda_max|`` comes from power iteration and ``|lambda_min|`` from
    inverse iteration whose inner solves use conjugate gradient, so the
    second half is only reliable for positive-definite input. If either
    iteration fails to settle within ``max_iter`` the best estimate so far
    is returned with ``converged=False``.
    """
    from .solvers import conjugate_gradient

    n = A.n
    if n == 0:
        return ConditionEstimate(1.0, 0.0, 0.0, True)
    rng = np.random.Generator(np.random.Philox(seed))
    v0 = rng.uniform(-1.0, 1.0, n)
    v0 /= np.linalg.norm(v0)

    # ||A v_k|| is non-decreasing for symmetric A and tends to |lambda|_max
    v = v0.copy()
    lam_max = 0.0
    ok_max = False
    for _ in range(max_iter):
        w = spmv(A, v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return ConditionEstimate(np.inf, 0.0, 0.0, False)
        done = abs(nw - lam_max) <= tol * nw
        lam_max = nw
        v = w / nw
        if done:
            ok_max = True
            break

    # inverse iteration; the Rayleigh quotient of each iterate tolerates inexact inner solves
    v = v0.copy()
    lam_min = 0.0
    ok_min = False
    eps = np.finfo(np.float64).eps
    for _ in range(max_iter):
        rep = conjugate_gradient(A, v, tol=max(tol, 1e-10), max_iter=20 * n + 10)
        w = rep.solution
        nw = np.linalg.norm(w)
        # an inexact solve is fine, a failed one (e.g. indefinite A) is not
        if not (np.isfinite(nw) and nw > 0.0) or not rep.residual <= 1e-6:
            break
        v = w / nw
        lam = abs(float(v @ spmv(A, v)))
        if lam == 0.0:
            break
        # the quotient cannot be resolved below roundoff of order eps * lam_max
        done = abs(lam - lam_min) <= max(tol, 64 * eps * lam_max / lam) * lam
        lam_min = lam
        if done:
            ok_min = True
            break
    if lam_min == 0.0:
        return ConditionEstimate(np.inf, lam_max, 0.0, False)
    return ConditionEstimate(lam_max / lam_min, lam_max, lam_min, ok_max and ok_min)
