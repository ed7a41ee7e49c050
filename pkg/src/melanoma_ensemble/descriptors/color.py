from __future__ import annotations

import numpy as np

from .base import FeatureVector

_DEGENERATE = 1e-12


def extract_col(img: np.ndarray) -> FeatureVector:
    """Per-channel mean, std and skewness followed by the RG, RB and GB correlations.

    Population moments. A channel with zero variance gets skewness 0 and
    correlation 0 with every other channel.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.size == 0:
        raise ValueError(f"expected a non-empty (h, w, 3) image, got shape {img.shape}")
    ch = img.reshape(-1, 3).T
    means = ch.mean(axis=1)
    centred = ch - means[:, None]
    var = (centred ** 2).mean(axis=1)
    std = np.sqrt(var)
    flat = std <= _DEGENERATE * np.maximum(1.0, np.abs(means))
    feats = []
    for c in range(3):
        skew = 0.0 if flat[c] else float((centred[c] ** 3).mean() / std[c] ** 3)
        feats.extend([means[c], std[c], skew])
    for a, b in ((0, 1), (0, 2), (1, 2)):
        if flat[a] or flat[b]:
            feats.append(0.0)
        else:
            feats.append(float((centred[a] * centred[b]).mean() / (std[a] * std[b])))
    return FeatureVector("col", np.array(feats))
