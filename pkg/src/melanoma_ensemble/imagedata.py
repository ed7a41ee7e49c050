"""Dataset manifests, image loading and input preparation.

Images are numpy arrays: RGB is ``(height, width, 3)`` float64 and gray is
``(height, width)`` float64, both with intensities in [0, 255].
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DataError

SPLITS = ("train", "val", "test")

# (height, width) of the crop box used by the Cr1 strategy
CR1_CROP = (150, 200)


@dataclass(frozen=True)
class ManifestRow:
    id: str
    path: Path
    label: int
    split: str


@dataclass
class DatasetManifest:
    rows: list[ManifestRow]
    class_names: list[str]

    def __post_init__(self):
        if len(self.class_names) < 2:
            raise DataError(f"need at least 2 classes, got {len(self.class_names)}")
        seen = set()
        for r in self.rows:
            if r.id in seen:
                raise DataError(f"duplicate id {r.id!r}")
            seen.add(r.id)
            if not 0 <= r.label < len(self.class_names):
                raise DataError(f"label {r.label} of {r.id!r} outside 0..{len(self.class_names) - 1}")
            if r.split not in SPLITS:
                raise DataError(f"unknown split {r.split!r} for {r.id!r}")
        if not any(r.split == "train" for r in self.rows):
            raise DataError("manifest has no train rows")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def split(self, name: str) -> list[ManifestRow]:
        return [r for r in self.rows if r.split == name]

    def splits_present(self) -> list[str]:
        return [s for s in SPLITS if any(r.split == s for r in self.rows)]


def load_manifest(path) -> DatasetManifest:
    """Read a manifest CSV with header ``id,path,label,split``.

    An optional leading ``# classes=a,b,c`` line fixes the class order;
    otherwise the distinct labels are sorted. Relative image paths resolve
    against the manifest's directory. Row numbers in errors count data rows
    from 1.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    text = path.read_text(encoding="utf-8-sig")
    lines = text.splitlines()
    declared = None
    while lines and lines[0].startswith("#"):
        meta = lines.pop(0)[1:].strip()
        key, _, value = meta.partition("=")
        if key.strip() == "classes":
            declared = [c.strip() for c in value.split(",") if c.strip()]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{path}: no rows") from None
    if header != ["id", "path", "label", "split"]:
        raise DataError(f"{path}: header must be 'id,path,label,split', got {','.join(header)!r}")

    raw = []
    first_row = {}
    for rowno, rec in enumerate(reader, start=1):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != 4:
            raise DataError(f"{path}: row {rowno}: expected 4 fields, got {len(rec)}")
        rid, rpath, label, split = (f.strip() for f in rec)
        if rid in first_row:
            raise DataError(f"{path}: duplicate id {rid!r} at rows {first_row[rid]} and {rowno}")
        first_row[rid] = rowno
        if split not in SPLITS:
            raise DataError(f"{path}: row {rowno}: unknown split tag {split!r}")
        raw.append((rowno, rid, rpath, label, split))
    if not raw:
        raise DataError(f"{path}: no rows")

    class_names = declared if declared is not None else sorted({r[3] for r in raw})
    index = {name: i for i, name in enumerate(class_names)}
    rows = []
    for rowno, rid, rpath, label, split in raw:
        if label not in index:
            raise DataError(f"{path}: row {rowno}: label {label!r} not in class set {class_names}")
        p = Path(rpath)
        if not p.is_absolute():
            p = path.parent / p
        rows.append(ManifestRow(rid, p, index[label], split))
    return DatasetManifest(rows, list(class_names))


def load_image(path) -> np.ndarray:
    """Decode a PNG/JPEG file to a float64 RGB array."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from None
    return arr


def save_image(path, img: np.ndarray) -> None:
    arr = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def check_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected (h, w, 3) image, got shape {img.shape}")
    if img.min() < 0 or img.max() > 255:
        raise ValueError("channel values outside [0, 255]")
    return img


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """BT.601 luminance."""
    img = np.asarray(img, dtype=np.float64)
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _sample_bilinear(img, ys, xs):
    # img is (h, w, c); ys/xs are grids of source coordinates, already clamped
    coords = np.stack([ys, xs])
    out = np.empty(ys.shape + (img.shape[2],))
    for ch in range(img.shape[2]):
        out[..., ch] = ndimage.map_coordinates(img[..., ch], coords, order=1, mode="nearest")
    return out


def resize_bilinear(img: np.ndarray, target) -> np.ndarray:
    """Resize to ``target = (width, height)`` with half-pixel-centre bilinear sampling."""
    tw, th = int(target[0]), int(target[1])
    if tw < 1 or th < 1:
        raise ValueError(f"target dims must be >= 1, got {target}")
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    h, w = img.shape[:2]
    ys = (np.arange(th) + 0.5) * (h / th) - 0.5
    xs = (np.arange(tw) + 0.5) * (w / tw) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = _sample_bilinear(img, yy, xx)
    return out[..., 0] if squeeze else out


def center_crop(img: np.ndarray, size) -> np.ndarray:
    """Centre crop to ``size = (height, width)``, clamped to the image bounds."""
    h, w = img.shape[:2]
    ch, cw = min(int(size[0]), h), min(int(size[1]), w)
    top = (h - ch) // 2
    left = (w - cw) // 2
    return img[top:top + ch, left:left + cw]


def prepare_input(img: np.ndarray, strategy: str, target, crop=CR1_CROP) -> np.ndarray:
    """Apply the ``Res`` (plain resize) or ``Cr1`` (centre crop, then resize) strategy.

    ``target`` is ``(width, height)``; ``crop`` is ``(height, width)``.
    """
    img = np.asarray(img, dtype=np.float64)
    if strategy == "Res":
        return resize_bilinear(img, target)
    if strategy == "Cr1":
        return resize_bilinear(center_crop(img, crop), target)
    raise ValueError(f"unknown input strategy {strategy!r} (expected 'Res' or 'Cr1')")


@dataclass(frozen=True)
class AugmentParams:
    flip_h_prob: float = 0.5
    flip_v_prob: float = 0.5
    rotation_max: float = 15.0
    translate_max: float = 0.1
    scale_range: tuple = (0.9, 1.1)
    seed: int = 0

    def __post_init__(self):
        for name in ("flip_h_prob", "flip_v_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.rotation_max < 0:
            raise ValueError("rotation_max must be >= 0")
        if self.translate_max < 0:
            raise ValueError("translate_max must be >= 0")
        low, high = self.scale_range
        if not 0 < low <= high:
            raise ValueError(f"scale_range must satisfy 0 < low <= high, got {self.scale_range}")

    @classmethod
    def identity(cls, seed=0):
        return cls(0.0, 0.0, 0.0, 0.0, (1.0, 1.0), seed)


@dataclass(frozen=True)
class AugmentDraw:
    flip_h: bool
    flip_v: bool
    angle: float
    shift: tuple
    scale: float


def draw_augmentation(p: AugmentParams, draw_index: int) -> AugmentDraw:
    # every draw consumes the same number of variates so the stream layout
    # does not depend on the parameter values
    rng = np.random.default_rng([int(p.seed), int(draw_index)])
    u = rng.random(6)
    low, high = p.scale_range
    return AugmentDraw(
        flip_h=bool(u[0] < p.flip_h_prob),
        flip_v=bool(u[1] < p.flip_v_prob),
        angle=float((2 * u[2] - 1) * p.rotation_max),
        shift=(float((2 * u[3] - 1) * p.translate_max), float((2 * u[4] - 1) * p.translate_max)),
        scale=float(low + (high - low) * u[5]),
    )


def augment(img: np.ndarray, p: AugmentParams, draw_index: int) -> np.ndarray:
    """Random flip, rotation, translation and scaling keyed by ``(p.seed, draw_index)``.

    The geometric part is a single affine warp about the image centre with
    bilinear sampling and edge replication.
    """
    img = np.asarray(img, dtype=np.float64)
    d = draw_augmentation(p, draw_index)
    out = img
    if d.flip_h:
        out = out[:, ::-1]
    if d.flip_v:
        out = out[::-1, :]
    out = np.ascontiguousarray(out)
    if d.angle == 0.0 and d.shift == (0.0, 0.0) and d.scale == 1.0:
        return out.copy()

    h, w = out.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(d.angle)
    # forward map: rotate, scale about centre, then translate; we need the inverse
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    ty, tx = d.shift[1] * h, d.shift[0] * w
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dy = (yy - cy - ty) / d.scale
    dx = (xx - cx - tx) / d.scale
    src_x = cos_t * dx + sin_t * dy + cx
    src_y = -sin_t * dx + cos_t * dy + cy
    squeeze = out.ndim == 2
    if squeeze:
        out = out[..., None]
    res = _sample_bilinear(out, src_y, src_x)
    return res[..., 0] if squeeze else res
