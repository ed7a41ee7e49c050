"""Binarized statistical image features with loadable or generated filter banks."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..formats import atomic_write_text, fmt_float
from .base import FeatureVector, l1_normalize

SIZES = (3, 5, 7, 9, 11)
N_FILTERS = 8
DEFAULT_SEED = 42


class FilterBank:
    """Immutable stack of zero-mean square kernels, shape (n_filters, size, size)."""

    def __init__(self, coefficients):
        k = np.array(coefficients, dtype=np.float64)
        if k.ndim != 3 or k.shape[1] != k.shape[2]:
            raise ValueError(f"filter bank must have shape (n, s, s), got {k.shape}")
        means = k.mean(axis=(1, 2), keepdims=True)
        # already-centred kernels (e.g. a saved default bank) are kept bit-exact
        if np.any(np.abs(means) > 1e-12 * np.abs(k).max(axis=(1, 2), keepdims=True)):
            k = k - means
        k.setflags(write=False)
        self.coefficients = k

    @property
    def n_filters(self) -> int:
        return self.coefficients.shape[0]

    @property
    def size(self) -> int:
        return self.coefficients.shape[1]

    def __repr__(self):
        return f"FilterBank(size={self.size}, n_filters={self.n_filters})"


def _gram_schmidt(rows: np.ndarray) -> np.ndarray:
    out = []
    for v in rows:
        v = v.copy()
        for q in out:
            v -= np.dot(q, v) * q
        norm = np.linalg.norm(v)
        if norm < 1e-10:
            raise ValueError("degenerate random draw in Gram-Schmidt")
        out.append(v / norm)
    return np.array(out)


@lru_cache(maxsize=None)
def default_bank(size: int, n_filters: int = N_FILTERS, seed: int = DEFAULT_SEED) -> FilterBank:
    """Deterministic stand-in for a learned bank.

    Rows of a seeded normal matrix are centred and orthonormalised with
    Gram-Schmidt; orthonormal combinations of zero-mean vectors stay zero-mean.
    """
    if n_filters > size * size - 1:
        raise ValueError(f"at most {size * size - 1} zero-mean orthonormal {size}x{size} filters exist")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_filters, size * size))
    a -= a.mean(axis=1, keepdims=True)
    q = _gram_schmidt(a)
    return FilterBank(q.reshape(n_filters, size, size))


def load_filter_bank(path) -> FilterBank:
    """Read ``size n_filters`` followed by n_filters row-major size x size blocks."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"filter bank not found: {path}")
    tokens = path.read_text(encoding="utf-8").split()
    try:
        size, n = int(tokens[0]), int(tokens[1])
        values = [float(t) for t in tokens[2:]]
    except (IndexError, ValueError) as exc:
        raise DataError(f"{path}: malformed filter bank ({exc})") from None
    if len(values) != n * size * size:
        raise DataError(f"{path}: expected {n * size * size} coefficients, found {len(values)}")
    return FilterBank(np.array(values).reshape(n, size, size))


def save_filter_bank(path, bank: FilterBank) -> None:
    lines = [f"{bank.size} {bank.n_filters}"]
    for kernel in bank.coefficients:
        lines.extend(" ".join(fmt_float(v) for v in row) for row in kernel)
    atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class BsifConfig:
    filter_size: int = 7
    threshold: float = 0.0
    bank: FilterBank | None = None

    def __post_init__(self):
        if self.filter_size not in SIZES:
            raise ValueError(f"filter_size must be one of {SIZES}, got {self.filter_size}")
        if self.bank is None:
            object.__setattr__(self, "bank", default_bank(self.filter_size))
        if self.bank.size != self.filter_size:
            raise ValueError(f"bank is {self.bank.size}x{self.bank.size}, config asks for {self.filter_size}")
        if self.bank.n_filters != N_FILTERS:
            raise ValueError(f"bank must hold {N_FILTERS} filters, has {self.bank.n_filters}")


def bsif_responses(img: np.ndarray, bank: FilterBank) -> np.ndarray:
    """Correlation with each kernel over an edge-replicated image, shape (n, h, w).

    Each window is taken relative to its centre pixel; for zero-mean kernels
    this is the plain response, but constants cancel exactly.
    """
    img = np.asarray(img, dtype=np.float64)
    s = bank.size
    h, w = img.shape
    if h < s or w < s:
        raise ValueError(f"{w}x{h} image smaller than the {s}x{s} filters")
    r = s // 2
    padded = np.pad(img, r, mode="edge")
    out = np.zeros((bank.n_filters, h, w))
    for a in range(s):
        for b in range(s):
            diff = padded[a:a + h, b:b + w] - img
            for i in range(bank.n_filters):
                out[i] += bank.coefficients[i, a, b] * diff
    return out


def extract_bsif(img: np.ndarray, cfg: BsifConfig = BsifConfig()) -> FeatureVector:
    """256-bin histogram of codes with bit i set when response i > threshold."""
    resp = bsif_responses(img, cfg.bank)
    code = np.zeros(resp.shape[1:], dtype=np.int64)
    for i in range(resp.shape[0]):
        code |= (resp[i] > cfg.threshold).astype(np.int64) << i
    return FeatureVector("bsif", l1_normalize(np.bincount(code.ravel(), minlength=1 << resp.shape[0])))
