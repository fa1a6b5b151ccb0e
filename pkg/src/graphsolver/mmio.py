"""Matrix Market I/O via :mod:`scipy.io`, with 17 significant digits on output."""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

from .sparse import SparseSymMatrix

__all__ = ["MatrixMarketError", "read_matrix", "write_matrix", "read_vector", "write_vector"]

PRECISION = 17


class MatrixMarketError(ValueError):
    pass


def _read(path):
    with open(path, "rb") as fh:  # a bare str that is not a file would be parsed as content
        try:
            return scipy.io.mmread(fh)
        except Exception as exc:  # scipy raises ValueError/IndexError/etc. on malformed input
            raise MatrixMarketError(f"{path}: malformed Matrix Market file ({exc})") from exc


def write_matrix(path, A):
    """Write ``coordinate real symmetric`` with 1-based indices."""
    scipy.io.mmwrite(str(path), A.csr.tocoo(), symmetry="symmetric", precision=PRECISION)


def read_matrix(path):
    M = _read(path)
    if not sp.issparse(M):
        M = sp.coo_matrix(np.asarray(M, dtype=np.float64))
    try:
        return SparseSymMatrix.from_scipy(M.astype(np.float64))
    except ValueError as exc:
        raise MatrixMarketError(f"{path}: {exc}") from exc


def write_vector(path, v):
    """Write an ``array real general`` column."""
    scipy.io.mmwrite(str(path), np.asarray(v, dtype=np.float64).reshape(-1, 1), precision=PRECISION)


def read_vector(path):
    M = _read(path)
    M = M.toarray() if sp.issparse(M) else np.asarray(M)
    if M.ndim != 2 or M.shape[1] != 1:
        raise MatrixMarketError(f"{path}: expected a single column, got shape {M.shape}")
    return M[:, 0].astype(np.float64)
