"""Synthetic SPD systems and on-disk corpora.

All randomness goes through numpy's ``Philox`` counter-based generator, so a
``(generator, parameters, seed)`` triple reproduces a sample bit for bit.
Ground-truth solutions are sampled uniformly from ``[-1, 1]`` and the right
hand side is computed as ``b = A x``; nothing is ever solved.

On disk a sample with stem ``s`` is four files: ``s.A.mtx`` (Matrix Market
coordinate real symmetric), ``s.b.mtx`` and ``s.x.mtx`` (Matrix Market
array) and ``s.meta`` (``key=value`` lines). A manifest lists the sample
stems of one split together with a SHA-256 over their files.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .mmio import MatrixMarketError, read_matrix, read_vector, write_matrix, write_vector
from .sparse import SparseSymMatrix, max_abs_norm, spmv

__all__ = [
    "LinearSystemSample",
    "DatasetManifest",
    "DatasetError",
    "make_rng",
    "generate_grid_system",
    "generate_random_spd",
    "sample_from_matrix",
    "generate_grid_dataset",
    "save_sample",
    "load_sample",
    "make_splits",
    "write_manifest",
    "read_manifest",
    "load_manifest_samples",
    "write_dataset",
    "RESIDUAL_TOL",
]

RESIDUAL_TOL = 1e-12
MANIFEST_VERSION = 1


class DatasetError(ValueError):
    pass


def make_rng(seed):
    return np.random.Generator(np.random.Philox(seed))


@dataclass(eq=False)
class LinearSystemSample:
    A: SparseSymMatrix
    b: np.ndarray
    x: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.A.n

    def relative_residual(self):
        r = np.linalg.norm(spmv(self.A, self.x) - self.b)
        nb = np.linalg.norm(self.b)
        return float(r / nb) if nb > 0 else float(r)


def _solution(rng, n, wide_scale):
    x = rng.uniform(-1.0, 1.0, n)
    if wide_scale:
        # per-sample magnitude, log-uniform in [1e-8, 1]
        x = x * 10.0 ** rng.uniform(-8.0, 0.0)
    return x


def generate_grid_system(rows, cols, coeff_range=(0.1, 10.0), seed=0, *, shift=1e-8, wide_scale=False):
    """5-point diffusion stiffness matrix on a ``rows x cols`` grid.

    Each grid edge gets a conductivity ``k ~ U(coeff_range)``; it contributes
    ``-k`` off the diagonal and ``+k`` to both diagonal entries. The result
    is a weighted graph Laplacian, made strictly positive definite by adding
    ``shift * max|a_ij|`` to the diagonal.
    """
    rows, cols = int(rows), int(cols)
    n = rows * cols
    if rows < 1 or cols < 1 or n < 2:
        raise ValueError("grid needs rows * cols >= 2")
    rng = make_rng(seed)
    idx = np.arange(n).reshape(rows, cols)
    src = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    dst = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    lo, hi = coeff_range
    k = rng.uniform(lo, hi, src.size)
    diag = np.zeros(n)
    np.add.at(diag, src, k)
    np.add.at(diag, dst, k)
    if shift:
        diag = diag + shift * max(np.max(np.abs(k)), np.max(np.abs(diag)))
    ii = np.arange(n)
    A = SparseSymMatrix(n, np.concatenate([ii, src]), np.concatenate([ii, dst]), np.concatenate([diag, -k]))
    x = _solution(rng, n, wide_scale)
    meta = {
        "generator": "grid",
        "rows": rows,
        "cols": cols,
        "coeff_range": list(coeff_range),
        "shift": shift,
        "wide_scale": wide_scale,
        "seed": seed,
        "n": n,
        "nnz": A.nnz,
    }
    return LinearSystemSample(A, spmv(A, x), x, meta)


def generate_random_spd(n, density=0.1, seed=0, *, floor=1e-6, wide_scale=False):
    """``A = G^T G + floor * I`` for a random sparse ``G``; only the upper triangle is kept."""
    if n < 1 or not 0.0 < density <= 1.0:
        raise ValueError("need n >= 1 and density in (0, 1]")
    rng = make_rng(seed)
    G = sp.random(n, n, density=density, format="csr", random_state=rng, data_rvs=lambda k: rng.standard_normal(k))
    M = sp.coo_matrix(G.T @ G + floor * sp.identity(n))
    upper = M.row <= M.col
    A = SparseSymMatrix(n, M.row[upper], M.col[upper], M.data[upper])
    x = _solution(rng, n, wide_scale)
    meta = {"generator": "random_spd", "density": density, "floor": floor, "wide_scale": wide_scale,
            "seed": seed, "n": n, "nnz": A.nnz}
    return LinearSystemSample(A, spmv(A, x), x, meta)


def sample_from_matrix(A, seed=0, *, wide_scale=False, meta=None):
    """Attach a synthetic uniform solution to a bare matrix."""
    x = _solution(make_rng(seed), A.n, wide_scale)
    info = {"generator": "matrix_only", "seed": seed, "n": A.n, "nnz": A.nnz}
    info.update(meta or {})
    return LinearSystemSample(A, spmv(A, x), x, info)


def _grid_shape(rng, n_min, n_max):
    for _ in range(1000):
        target = rng.integers(n_min, n_max + 1)
        aspect = rng.uniform(1.0, 3.0)
        r = max(2, int(round(np.sqrt(target / aspect))))
        c = max(2, int(round(target / r)))
        if n_min <= r * c <= n_max:
            return r, c
    raise ValueError(f"cannot fit a grid with n in [{n_min}, {n_max}]")


def generate_grid_dataset(count, n_range=(50, 200), seed=0, **kw):
    """``count`` grid systems with node counts in ``n_range`` (inclusive)."""
    rng = make_rng(seed)
    sample_seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    out = []
    for i in range(count):
        r, c = _grid_shape(rng, *n_range)
        s = generate_grid_system(r, c, seed=int(sample_seeds[i]), **kw)
        s.meta["index"] = i
        out.append(s)
    return out


# -- files ------------------------------------------------------------------

def _paths(stem):
    stem = str(stem)
    return {k: Path(f"{stem}.{k}.mtx") for k in ("A", "b", "x")} | {"meta": Path(f"{stem}.meta")}


def _write_meta(path, meta):
    with open(path, "w") as fh:
        for k in sorted(meta):
            fh.write(f"{k}={json.dumps(meta[k])}\n")


def _read_meta(path):
    meta = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DatasetError(f"{path}:{lineno}: expected key=value")
            meta[key] = json.loads(value)
    return meta


def save_sample(sample, stem):
    p = _paths(stem)
    p["A"].parent.mkdir(parents=True, exist_ok=True)
    write_matrix(p["A"], sample.A)
    write_vector(p["b"], sample.b)
    write_vector(p["x"], sample.x)
    _write_meta(p["meta"], sample.meta)
    return p


def load_sample(stem, *, matrix_only=False, seed=0, tol=RESIDUAL_TOL):
    """Load a sample written by :func:`save_sample`.

    ``matrix_only=True`` accepts a bare ``.mtx`` path (or stem whose ``.b``/
    ``.x`` files are missing) and synthesizes ``x ~ U[-1, 1]``, ``b = A x``.
    """
    stem = str(stem)
    if matrix_only:
        path = Path(stem) if stem.endswith(".mtx") else _paths(stem)["A"]
        A = read_matrix(path)
        return sample_from_matrix(A, seed, meta={"source": str(path)})
    p = _paths(stem)
    A = read_matrix(p["A"])
    b = read_vector(p["b"])
    x = read_vector(p["x"])
    meta = _read_meta(p["meta"]) if p["meta"].exists() else {}
    if b.size != A.n or x.size != A.n:
        raise DatasetError(f"{stem}: vector lengths do not match n={A.n}")
    s = LinearSystemSample(A, b, x, meta)
    res = s.relative_residual()
    if not res <= tol:
        raise DatasetError(f"{stem}: A x - b relative residual {res:.3e} exceeds {tol:.0e} (corrupt sample?)")
    return s


def sample_checksum(stem):
    h = hashlib.sha256()
    for key, path in _paths(stem).items():
        try:
            h.update(path.read_bytes())
        except FileNotFoundError:
            raise DatasetError(f"{path}: missing sample file") from None
    return h.hexdigest()


@dataclass
class DatasetManifest:
    split: str
    entries: list  # (stem, sha256) pairs; stems relative to the manifest directory
    generator: dict = field(default_factory=dict)
    version: int = MANIFEST_VERSION


def make_splits(items, fractions=(0.8, 0.1, 0.1), seed=0, names=("train", "val", "test")):
    """Shuffle ``items`` deterministically and cut them at the cumulative fractions."""
    items = list(items)
    if not items:
        raise ValueError("cannot split an empty collection")
    fractions = np.asarray(fractions, dtype=np.float64)
    if len(fractions) != len(names) or np.any(fractions < 0) or not np.isclose(fractions.sum(), 1.0):
        raise ValueError("fractions must be non-negative, one per split, and sum to 1")
    order = make_rng(seed).permutation(len(items))
    cuts = np.rint(np.cumsum(fractions) * len(items)).astype(int)
    cuts[-1] = len(items)
    starts = np.concatenate([[0], cuts[:-1]])
    return {name: [items[i] for i in order[a:b]] for name, a, b in zip(names, starts, cuts)}


def write_manifest(path, manifest):
    with open(path, "w") as fh:
        fh.write(f"# graphsolver dataset manifest\nversion {manifest.version}\nsplit {manifest.split}\n")
        fh.write(f"generator {json.dumps(manifest.generator, sort_keys=True)}\n")
        for stem, digest in manifest.entries:
            fh.write(f"sample {stem} {digest}\n")


def read_manifest(path):
    split, version, generator, entries = None, None, {}, []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            if key == "version":
                version = int(rest)
            elif key == "split":
                split = rest
            elif key == "generator":
                generator = json.loads(rest)
            elif key == "sample":
                stem, _, digest = rest.rpartition(" ")
                entries.append((stem, digest))
            else:
                raise DatasetError(f"{path}:{lineno}: unknown manifest key {key!r}")
    if version != MANIFEST_VERSION or split is None:
        raise DatasetError(f"{path}: missing or unsupported manifest header")
    return DatasetManifest(split, entries, generator, version)


def load_manifest_samples(path, *, verify=True):
    m = read_manifest(path)
    root = Path(path).parent
    out = []
    for stem, digest in m.entries:
        full = root / stem
        if verify and sample_checksum(full) != digest:
            raise DatasetError(f"{full}: checksum mismatch")
        out.append(load_sample(full))
    return out


def write_dataset(out_dir, samples, fractions=(0.8, 0.1, 0.1), seed=0, generator=None):
    """Save samples under ``out_dir`` and write one manifest per split; returns manifest paths."""
    out_dir = Path(out_dir)
    os.makedirs(out_dir / "samples", exist_ok=True)
    stems = []
    for i, s in enumerate(samples):
        stem = Path("samples") / f"sample_{i:05d}"
        save_sample(s, out_dir / stem)
        stems.append(str(stem))
    paths = {}
    for name, members in make_splits(stems, fractions, seed).items():
        entries = [(stem, sample_checksum(out_dir / stem)) for stem in members]
        paths[name] = out_dir / f"{name}.manifest"
        write_manifest(paths[name], DatasetManifest(name, entries, generator or {}))
    return paths


__all__ += ["sample_checksum", "MatrixMarketError"]
