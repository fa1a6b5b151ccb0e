"""Permutation-equivariant node features for a (scaled) linear system.

Each node gets ``b_i`` plus optional columns derived from ``(A, b)`` by
operations that commute with node relabeling: the diagonal ``a_ii``, Jacobi
iterates, conjugate gradient iterates and Krylov powers ``A^k b``. Every
column is divided by its max-abs norm, which keeps the input range
independent of ``n``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .solvers import ZeroDiagonalError
from .sparse import dot_ordered, max_abs_norm, spmv_ordered

__all__ = [
    "AugmentationConfig",
    "FeatureMatrix",
    "PRESETS",
    "normalize_column",
    "diagonal_augment",
    "jacobi_augment",
    "cg_augment",
    "arnoldi_augment",
    "build_features",
]

_CG_CURVATURE_TOL = 1e-300


@dataclass(frozen=True)
class AugmentationConfig:
    include_diagonal: bool = True
    jacobi_steps: int = 0
    cg_steps: int = 14
    arnoldi_steps: int = 0
    zero_tol: float = 1e-30

    def __post_init__(self):
        for name in ("jacobi_steps", "cg_steps", "arnoldi_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def d_in(self):
        return 1 + int(self.include_diagonal) + self.jacobi_steps + self.cg_steps + self.arnoldi_steps

    def labels(self):
        out = ["b"]
        if self.include_diagonal:
            out.append("diag")
        out += [f"jacobi_{k}" for k in range(1, self.jacobi_steps + 1)]
        out += [f"cg_{k}" for k in range(1, self.cg_steps + 1)]
        out += [f"arnoldi_{k}" for k in range(1, self.arnoldi_steps + 1)]
        return tuple(out)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def preset(cls, name, steps=14):
        """Named feature sets; the diagonal is always included."""
        try:
            families = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown augmentation preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(
            include_diagonal=True,
            jacobi_steps=steps if "jacobi" in families else 0,
            cg_steps=steps if "cg" in families else 0,
            arnoldi_steps=steps if "arnoldi" in families else 0,
        )


PRESETS = {
    "none": (),
    "arnoldi": ("arnoldi",),
    "jacobi": ("jacobi",),
    "cg": ("cg",),
    "cg+arnoldi": ("cg", "arnoldi"),
    "cg+jacobi": ("cg", "jacobi"),
}


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    labels: tuple

    @property
    def shape(self):
        return self.values.shape

    def column(self, label):
        return self.values[:, self.labels.index(label)]


def normalize_column(u, tol=1e-30):
    u = np.asarray(u, dtype=np.float64)
    s = max_abs_norm(u)
    return u / s if s > tol else u.copy()


def diagonal_augment(A):
    return A.diagonal()


def jacobi_augment(A, b, m, tol=1e-30):
    """Normalized Jacobi iterates ``x^(1..m)`` from ``x^(0) = 0``."""
    if m == 0:
        return []
    d = A.diagonal()
    zero = np.flatnonzero(d == 0.0)
    if zero.size:
        raise ZeroDiagonalError(f"Jacobi augmentation needs a nonzero diagonal; row {zero[0]} is zero")
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    out = []
    for _ in range(m):
        # D^-1 (b - M x) with M = A - D
        x = (b - spmv_ordered(A, x) + d * x) / d
        out.append(normalize_column(x, tol))
    return out


def cg_augment(A, b, m, tol=1e-30):
    """Normalized conjugate gradient iterates ``x^(1..m)`` from ``x^(0) = 0``.

    Once the curvature ``p^T A p`` is negligible or not finite the last
    iterate is repeated for the remaining columns. All sums run in value
    order: CG magnifies rounding differences by several times per step, and
    this keeps the columns exactly equivariant under node relabeling.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = dot_ordered(r, r)
    out = []
    stalled = rr == 0.0
    for _ in range(m):
        if not stalled:
            Ap = spmv_ordered(A, p)
            pAp = dot_ordered(p, Ap)
            if not np.isfinite(pAp) or abs(pAp) <= _CG_CURVATURE_TOL:
                stalled = True
            else:
                alpha = rr / pAp
                x = x + alpha * p
                r = r - alpha * Ap
                rr_new = dot_ordered(r, r)
                if rr_new == 0.0:
                    stalled = True
                else:
                    p = r + (rr_new / rr) * p
                    rr = rr_new
        out.append(normalize_column(x, tol))
    return out


def arnoldi_augment(A, b, m, tol=1e-30):
    """Normalized Krylov powers ``A^k b``, renormalizing after every product."""
    v = normalize_column(b, tol)
    out = []
    for _ in range(m):
        v = normalize_column(spmv_ordered(A, v), tol)
        out.append(v)
    return out


def build_features(A, b, cfg=None):
    """Feature columns ``[b | diag | jacobi | cg | arnoldi]``, each max-abs normalized.

    Callers pass the scaled system (see :mod:`graphsolver.scaling`).
    """
    cfg = cfg or AugmentationConfig()
    b = np.asarray(b, dtype=np.float64)
    tol = cfg.zero_tol
    cols = [normalize_column(b, tol)]
    if cfg.include_diagonal:
        cols.append(normalize_column(diagonal_augment(A), tol))
    cols += jacobi_augment(A, b, cfg.jacobi_steps, tol)
    cols += cg_augment(A, b, cfg.cg_steps, tol)
    cols += arnoldi_augment(A, b, cfg.arnoldi_steps, tol)
    values = np.column_stack(cols) if A.n else np.zeros((0, cfg.d_in))
    return FeatureMatrix(values, cfg.labels())
