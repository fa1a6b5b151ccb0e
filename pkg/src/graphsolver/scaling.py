"""Scale-canonical form of a system and closed-form recovery of the solution magnitude.

``A`` and ``b`` are divided by their max-abs norms, so every positive
rescaling of a system maps to the same ``(A_bar, b_bar)``. A network then only
has to predict the solution direction ``x_tilde``; the magnitude is the
least-squares optimal scalar

    mu = <A_bar x_tilde, b_bar> / ||A_bar x_tilde||_2^2

and the solution estimate is ``x_hat = mu * ||b|| / ||A|| * x_tilde``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .sparse import DimensionMismatchError, SparseSymMatrix, max_abs_norm, spmv

__all__ = ["ScaledSystem", "MuEstimate", "normalize_system", "estimate_mu", "recover_solution"]

_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True, eq=False)
class ScaledSystem:
    matrix: SparseSymMatrix
    rhs: np.ndarray
    matrix_scale: float
    rhs_scale: float

    @property
    def n(self):
        return self.matrix.n

    def original(self):
        """Rebuild ``(A, b)``."""
        A = self.matrix.scaled(self.matrix_scale) if self.matrix_scale > 0 else self.matrix
        return A, self.rhs * self.rhs_scale


class MuEstimate(NamedTuple):
    mu: float
    degenerate: bool


def normalize_system(A, b):
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or b.shape[0] != A.n:
        raise DimensionMismatchError(f"b of shape {b.shape} does not match n={A.n}")
    sA = max_abs_norm(A)
    sb = max_abs_norm(b)
    A_bar = A.divided(sA) if sA > 0 else A
    b_bar = b / sb if sb > 0 else np.zeros_like(b)
    b_bar.setflags(write=False)
    return ScaledSystem(A_bar, b_bar, sA, sb)


def estimate_mu(s, x_tilde, tol=_TINY):
    """Least-squares scale ``argmin_mu ||mu A_bar x_tilde - b_bar||_2``."""
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x_tilde.shape != (s.n,):
        raise DimensionMismatchError(f"x_tilde of shape {x_tilde.shape} does not match n={s.n}")
    u = spmv(s.matrix, x_tilde)
    nu = np.linalg.norm(u)
    if not nu > tol:
        return MuEstimate(0.0, True)
    # divide twice so ||u||^2 cannot underflow on its own
    return MuEstimate(float((u @ s.rhs) / nu / nu), False)


def recover_solution(s, x_tilde, tol=_TINY):
    """``x_hat = mu * ||b|| / ||A|| * x_tilde``; zero when ``b == 0`` or ``mu`` is degenerate."""
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    mu, degenerate = estimate_mu(s, x_tilde, tol)
    if degenerate or s.rhs_scale == 0.0 or s.matrix_scale == 0.0:
        return np.zeros_like(x_tilde)
    return (mu * s.rhs_scale / s.matrix_scale) * x_tilde
