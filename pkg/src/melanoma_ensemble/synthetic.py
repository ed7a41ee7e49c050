"""Synthetic lesion-like texture dataset for desk-scale end-to-end runs.

Class ``c`` is an oriented sinusoidal grating (orientation and spatial
frequency fixed per class) on a class-specific tint, with a dark elliptical
blob in the middle. Per-image phase, blob size, noise and colour jitter
vary with the seed.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .formats import atomic_write_text
from .imagedata import save_image

HAM_CLASSES = ("akiec", "bcc", "bkl", "df", "mel", "nv", "vasc")


def texture_image(c: int, n_classes: int, rng: np.random.Generator, size=(48, 48)) -> np.ndarray:
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    theta = math.pi * c / n_classes
    freq = 0.12 + 0.06 * (c % 3)
    phase = rng.uniform(0, 2 * math.pi)
    wave = np.sin(2 * math.pi * freq * (xx * math.cos(theta) + yy * math.sin(theta)) + phase)
    hue = 2 * math.pi * c / n_classes
    tint = 128 + 60 * np.array([math.cos(hue), math.cos(hue - 2.1), math.cos(hue + 2.1)])
    tint = tint + rng.normal(0, 4, 3)
    img = tint[None, None, :] + 45 * wave[..., None] + rng.normal(0, 6, (h, w, 3))
    ry, rx = rng.uniform(0.18, 0.28) * h, rng.uniform(0.18, 0.28) * w
    blob = ((yy - h / 2) / ry) ** 2 + ((xx - w / 2) / rx) ** 2 <= 1.0
    img[blob] *= 0.45
    return np.clip(img, 0, 255)


def make_dataset(out_dir, counts=None, n_classes: int = 7, size=(48, 48), seed: int = 0) -> Path:
    """Write PNGs plus ``manifest.csv`` and return the manifest path.

    ``counts`` maps split to images per class; the default gives 70 train,
    35 val and 35 test images for 7 classes.
    """
    counts = counts or {"train": 10, "val": 5, "test": 5}
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    names = list(HAM_CLASSES[:n_classes]) if n_classes <= len(HAM_CLASSES) else [f"c{i}" for i in range(n_classes)]
    rng = np.random.default_rng(seed)
    lines = ["id,path,label,split"]
    for split, per_class in counts.items():
        for c in range(n_classes):
            for k in range(per_class):
                rid = f"{split}_{names[c]}_{k:03d}"
                rel = f"images/{rid}.png"
                save_image(out / rel, texture_image(c, n_classes, rng, size))
                lines.append(f"{rid},{rel},{names[c]},{split}")
    manifest = out / "manifest.csv"
    atomic_write_text(manifest, "\n".join(lines) + "\n")
    return manifest
