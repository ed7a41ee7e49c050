from __future__ import annotations

import numpy as np

from .base import FeatureVector

GRID = (5, 6)  # cell rows, cell columns
N_BINS = 9
EPS = 1e-6


def gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences [-1, 0, 1] with replicated borders (y grows downwards)."""
    p = np.pad(np.asarray(img, dtype=np.float64), 1, mode="edge")
    gx = p[1:-1, 2:] - p[1:-1, :-2]
    gy = p[2:, 1:-1] - p[:-2, 1:-1]
    return gx, gy


def orientation_bins(gx, gy) -> np.ndarray:
    """Unsigned orientation in [0, 180) split into 9 bins of 20 degrees."""
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    return np.floor(angle / (180.0 / N_BINS)).astype(np.int64) % N_BINS


def cell_edges(n: int, cells: int) -> np.ndarray:
    return (np.arange(cells + 1) * n) // cells


def extract_hog(img: np.ndarray) -> FeatureVector:
    """Histogram of oriented gradients on a fixed 5x6 cell grid, L2-normalised per cell."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    rows, cols = GRID
    if h < rows or w < cols:
        raise ValueError(f"{w}x{h} image smaller than the {rows}x{cols} HOG grid")
    gx, gy = gradients(img)
    mag = np.sqrt(gx * gx + gy * gy)
    bins = orientation_bins(gx, gy)
    ye, xe = cell_edges(h, rows), cell_edges(w, cols)
    out = np.empty((rows, cols, N_BINS))
    for i in range(rows):
        for j in range(cols):
            sl = (slice(ye[i], ye[i + 1]), slice(xe[j], xe[j + 1]))
            hist = np.bincount(bins[sl].ravel(), weights=mag[sl].ravel(), minlength=N_BINS)
            out[i, j] = hist / np.sqrt(np.dot(hist, hist) + EPS * EPS)
    return FeatureVector("hog", out.reshape(-1))
