"""Circular neighbourhood sampling shared by the LBP-family descriptors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SNAP = 1e-9


@dataclass(frozen=True)
class NeighborhoodConfig:
    radius: float
    points: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if self.points < 2:
            raise ValueError(f"points must be >= 2, got {self.points}")


@dataclass(frozen=True)
class Offset:
    """One neighbour: integer base corner plus bilinear weights.

    ``weights`` are for the corners (y0, x0), (y0, x0+1), (y0+1, x0),
    (y0+1, x0+1). ``exact`` neighbours fall on the pixel grid.
    """

    dy: int
    dx: int
    fy: float
    fx: float
    weights: tuple

    @property
    def exact(self) -> bool:
        return self.fy == 0.0 and self.fx == 0.0


def _snap(v: float) -> float:
    r = round(v)
    return float(r) if abs(v - r) < _SNAP else v


def circle_offsets(cfg: NeighborhoodConfig) -> list[Offset]:
    """Sample positions at angles 2*pi*k/P; angle 0 is +x, angles grow counter-clockwise
    as displayed (towards -y in row coordinates)."""
    out = []
    for k in range(cfg.points):
        theta = 2.0 * math.pi * k / cfg.points
        x = _snap(cfg.radius * math.cos(theta))
        y = _snap(-cfg.radius * math.sin(theta))
        x0, y0 = math.floor(x), math.floor(y)
        fx, fy = x - x0, y - y0
        w = ((1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy)
        out.append(Offset(int(y0), int(x0), fy, fx, w))
    return out


def support(offsets) -> tuple[int, int, int, int]:
    """Pixels needed above, below, left and right of a centre."""
    top = max(0, -min(o.dy for o in offsets))
    bottom = max(0, max(o.dy + (o.fy > 0) for o in offsets))
    left = max(0, -min(o.dx for o in offsets))
    right = max(0, max(o.dx + (o.fx > 0) for o in offsets))
    return top, bottom, left, right


def sample_circular(img: np.ndarray, cx: int, cy: int, cfg: NeighborhoodConfig) -> list[float]:
    """Bilinear samples of the P points on the circle around pixel ``(cx, cy)``."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    offsets = circle_offsets(cfg)
    top, bottom, left, right = support(offsets)
    if not (top <= cy < h - bottom and left <= cx < w - right):
        raise ValueError(f"circle of radius {cfg.radius} around ({cx}, {cy}) leaves the {w}x{h} image")
    vals = []
    for o in offsets:
        y, x = cy + o.dy, cx + o.dx
        if o.exact:
            vals.append(float(img[y, x]))
            continue
        w00, w01, w10, w11 = o.weights
        vals.append(
            float(w00 * img[y, x] + w01 * img[y, min(x + 1, w - 1)]
                  + w10 * img[min(y + 1, h - 1), x] + w11 * img[min(y + 1, h - 1), min(x + 1, w - 1)])
        )
    return vals


def interior_box(shape, offsets):
    """Row/column slices of valid centres, or ``None`` when the image is too small."""
    h, w = shape
    top, bottom, left, right = support(offsets)
    if h - top - bottom < 1 or w - left - right < 1:
        return None
    return slice(top, h - bottom), slice(left, w - right)


def neighbor_differences(img: np.ndarray, cfg: NeighborhoodConfig) -> tuple[np.ndarray, np.ndarray]:
    """Neighbour-minus-centre differences for every interior pixel.

    Returns ``(centres, diffs)`` with ``centres`` of shape (n,) and ``diffs``
    of shape (n, P), pixels in row-major order. Differences are interpolated
    from the corner differences, so adding a constant to an integer-valued
    image leaves them bit-identical.
    """
    img = np.asarray(img, dtype=np.float64)
    offsets = circle_offsets(cfg)
    box = interior_box(img.shape, offsets)
    if box is None:
        h, w = img.shape
        raise ValueError(f"{w}x{h} image too small for radius {cfg.radius}")
    rows, cols = box
    h, w = img.shape
    centre = img[rows, cols]
    r0, r1, c0, c1 = rows.start, rows.stop, cols.start, cols.stop

    def shifted(dy, dx):
        return img[r0 + dy:r1 + dy, c0 + dx:c1 + dx]

    diffs = np.empty(centre.shape + (cfg.points,))
    for k, o in enumerate(offsets):
        if o.exact:
            diffs[..., k] = shifted(o.dy, o.dx) - centre
            continue
        w00, w01, w10, w11 = o.weights
        a = shifted(o.dy, o.dx) - centre
        # zero-weight corners may sit one past the support; reuse the base corner there
        b = (shifted(o.dy, o.dx + 1) - centre) if o.fx > 0 else a
        c = (shifted(o.dy + 1, o.dx) - centre) if o.fy > 0 else a
        d = (shifted(o.dy + 1, o.dx + 1) - centre) if (o.fx > 0 and o.fy > 0) else (b if o.fx > 0 else c)
        diffs[..., k] = w00 * a + w01 * b + w10 * c + w11 * d
    return centre.reshape(-1), diffs.reshape(-1, cfg.points)
