"""PCA and DCT reduction of long descriptors to a target length."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .errors import DataError
from .formats import FeatureMatrix, atomic_write_text, fmt_float, format_header, parse_header

DEFAULT_TARGET = 4000
_GRAM_LIMIT = 4096
_RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def d(self) -> int:
        return self.components.shape[1]


def _as_array(x):
    return x.data if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)


def _complete_basis(basis: np.ndarray, d: int, need: int) -> np.ndarray:
    """Extend orthonormal rows with unit vectors orthogonalised against them."""
    rows = list(basis)
    for i in range(d):
        if len(rows) >= need:
            break
        v = np.zeros(d)
        v[i] = 1.0
        for q in rows:
            v -= np.dot(q, v) * q
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            rows.append(v / norm)
    return np.array(rows).reshape(len(rows), d)


def pca_fit(train, target_k: int = DEFAULT_TARGET) -> PcaModel:
    """Principal axes of the centred training data, k = min(target_k, d, n - 1).

    Uses the d x d covariance when d <= n - 1 or d is moderate, otherwise
    the n x n Gram matrix. Each component is signed so its largest-magnitude
    entry is positive.
    """
    X = _as_array(train)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError(f"PCA needs at least 2 samples, got shape {X.shape}")
    if target_k < 1:
        raise ValueError("target_k must be >= 1")
    n, d = X.shape
    k = min(int(target_k), d, n - 1)
    mean = X.mean(axis=0)
    Xc = X - mean
    if d <= _GRAM_LIMIT and d <= n:
        evals, evecs = np.linalg.eigh(Xc.T @ Xc / (n - 1))
        order = np.argsort(evals)[::-1]
        evals, comps = np.maximum(evals[order], 0.0), evecs[:, order].T
    else:
        evals, evecs = np.linalg.eigh(Xc @ Xc.T / (n - 1))
        order = np.argsort(evals)[::-1]
        evals, evecs = np.maximum(evals[order], 0.0), evecs[:, order]
        keep = evals > _RANK_TOL * max(evals[0], 1e-300)
        comps = (Xc.T @ evecs[:, keep]) / np.sqrt(evals[keep] * (n - 1))
        comps = _complete_basis(comps.T, d, k)
        evals = np.concatenate([evals[keep], np.zeros(max(0, len(comps) - keep.sum()))])
    comps, evals = comps[:k].copy(), evals[:k].copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return PcaModel(mean, comps, evals)


def pca_project(m: PcaModel, x):
    """(row - mean) @ components.T; returns the same container type it was given."""
    X = _as_array(x)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != m.d:
        raise DataError(f"input dim {X.shape[1]} != PCA dim {m.d}")
    Z = (X - m.mean) @ m.components.T
    if isinstance(x, FeatureMatrix):
        return FeatureMatrix(x.ids, Z, x.descriptor_id, x.meta)
    return Z


def pca_inverse(m: PcaModel, z) -> np.ndarray:
    Z = np.atleast_2d(_as_array(z))
    return Z @ m.components + m.mean


def dct_reduce(x, target_k: int = DEFAULT_TARGET):
    """First min(target_k, d) orthonormal DCT-II coefficients, per row for matrices."""
    if target_k < 1:
        raise ValueError("target_k must be >= 1")
    if isinstance(x, FeatureMatrix):
        coeffs = dct(x.data, type=2, norm="ortho", axis=1)[:, :target_k]
        return FeatureMatrix(x.ids, coeffs, x.descriptor_id, x.meta)
    arr = np.asarray(x, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("DCT of an empty vector")
    return dct(arr, type=2, norm="ortho", axis=-1)[..., :target_k]


def save_pca(path, m: PcaModel) -> None:
    lines = [format_header({"pca": "", "d": m.d, "k": m.k}),
             ",".join(["mean"] + [fmt_float(v) for v in m.mean])]
    for i, (row, var) in enumerate(zip(m.components, m.explained_variance)):
        lines.append(",".join([f"pc{i}", fmt_float(var)] + [fmt_float(v) for v in row]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_pca(path) -> PcaModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"PCA model not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    head = parse_header(lines[0])
    if "pca" not in head:
        raise DataError(f"{path}: missing '# pca' header")
    d, k = int(head["d"]), int(head["k"])
    mean = np.array([float(v) for v in lines[1].split(",")[1:]])
    rows = [[float(v) for v in ln.split(",")[1:]] for ln in lines[2:2 + k]]
    arr = np.array(rows).reshape(k, d + 1)
    return PcaModel(mean, arr[:, 1:].copy(), arr[:, 0].copy())
