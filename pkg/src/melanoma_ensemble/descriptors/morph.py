"""Shape features of the dark foreground found by Otsu thresholding."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .base import FeatureVector

FEATURES = (
    "object_count",
    "area_fraction",
    "perimeter",
    "aspect_ratio",
    "eccentricity",
    "solidity",
    "centroid_offset",
    "circularity",
)


def otsu_threshold(img: np.ndarray) -> float | None:
    """Otsu split over the distinct intensities; the foreground is ``img <= threshold``.

    Returns ``None`` for a constant image. Ties in between-class variance pick
    the lowest threshold.
    """
    values, counts = np.unique(np.asarray(img, dtype=np.float64), return_counts=True)
    if len(values) < 2:
        return None
    total = counts.sum()
    w0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(values * counts)[:-1]
    w1 = total - w0
    s1 = (values * counts).sum() - s0
    between = w0 * w1 * (s0 / w0 - s1 / w1) ** 2
    return float(values[int(np.argmax(between))])


def foreground_mask(img: np.ndarray) -> np.ndarray:
    t = otsu_threshold(img)
    if t is None:
        return np.zeros(np.shape(img), dtype=bool)
    return np.asarray(img) <= t


def object_features(mask: np.ndarray, shape) -> list[float]:
    """Area fraction, perimeter, aspect ratio, eccentricity, solidity, centroid offset, circularity."""
    h, w = shape
    ys, xs = np.nonzero(mask)
    area = len(ys)
    padded = np.pad(mask, 1, constant_values=False)
    inner = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    perimeter = int((mask & ~inner).sum())
    bw = xs.max() - xs.min() + 1
    bh = ys.max() - ys.min() + 1
    cy, cx = ys.mean(), xs.mean()
    syy = ((ys - cy) ** 2).mean()
    sxx = ((xs - cx) ** 2).mean()
    sxy = ((ys - cy) * (xs - cx)).mean()
    half = (syy + sxx) / 2
    root = math.sqrt(((syy - sxx) / 2) ** 2 + sxy ** 2)
    lam1, lam2 = half + root, max(half - root, 0.0)
    ecc = math.sqrt(max(0.0, 1.0 - lam2 / lam1)) if lam1 > 0 else 0.0
    half_diag = math.hypot((w - 1) / 2, (h - 1) / 2)
    offset = math.hypot(cx - (w - 1) / 2, cy - (h - 1) / 2) / half_diag if half_diag > 0 else 0.0
    return [
        area / (h * w),
        float(perimeter),
        bw / bh,
        ecc,
        area / (bw * bh),
        offset,
        4 * math.pi * area / perimeter ** 2,
    ]


def extract_mor(img: np.ndarray) -> FeatureVector:
    """Object count plus features of the largest 8-connected dark object.

    Ties for the largest object go to the one found first in raster order.
    An image without foreground gives the zero vector.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty gray image, got shape {img.shape}")
    mask = foreground_mask(img)
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return FeatureVector("mor", np.zeros(len(FEATURES)))
    areas = np.bincount(labels.ravel())[1:]
    largest = int(np.argmax(areas)) + 1
    feats = [float(count)] + object_features(labels == largest, img.shape)
    return FeatureVector("mor", np.array(feats))
