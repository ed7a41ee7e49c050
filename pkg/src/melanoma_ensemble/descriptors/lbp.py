"""Local ternary patterns, completed LBP and rotation-invariant co-occurrence LBP."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .base import FeatureVector, l1_normalize
from .sampling import NeighborhoodConfig, neighbor_differences

DEFAULT_SCALES = (NeighborhoodConfig(1, 8), NeighborhoodConfig(2, 16))
DEFAULT_RIC = ((1, 2), (2, 4), (4, 8))


def _transitions(code: int, p: int) -> int:
    rotated = ((code << 1) | (code >> (p - 1))) & ((1 << p) - 1)
    return bin(code ^ rotated).count("1")


@lru_cache(maxsize=None)
def uniform_mapping(p: int) -> np.ndarray:
    """u2 table: uniform codes get consecutive bins in code order, the rest share the last bin."""
    n_bins = p * (p - 1) + 3
    table = np.full(1 << p, n_bins - 1, dtype=np.int64)
    nxt = 0
    for code in range(1 << p):
        if _transitions(code, p) <= 2:
            table[code] = nxt
            nxt += 1
    assert nxt == n_bins - 1
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def riu2_mapping(p: int) -> np.ndarray:
    """riu2 table: uniform codes map to their popcount, the rest to ``p + 1``."""
    table = np.empty(1 << p, dtype=np.int64)
    for code in range(1 << p):
        table[code] = bin(code).count("1") if _transitions(code, p) <= 2 else p + 1
    table.setflags(write=False)
    return table


def _pack(bits: np.ndarray) -> np.ndarray:
    weights = np.left_shift(1, np.arange(bits.shape[1], dtype=np.int64))
    return bits.astype(np.int64) @ weights


@dataclass(frozen=True)
class LtpConfig:
    scales: tuple = DEFAULT_SCALES
    threshold: float = 3.0

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("LTP threshold must be >= 0")
        object.__setattr__(self, "scales", tuple(
            s if isinstance(s, NeighborhoodConfig) else NeighborhoodConfig(*s) for s in self.scales
        ))


def ltp_dim(cfg: LtpConfig) -> int:
    return sum(2 * (s.points * (s.points - 1) + 3) for s in cfg.scales)


def extract_ltp(img: np.ndarray, cfg: LtpConfig = LtpConfig()) -> FeatureVector:
    """Multiscale uniform LTP: upper and lower u2 histograms per scale."""
    img = np.asarray(img, dtype=np.float64)
    t = cfg.threshold
    blocks = []
    for s in cfg.scales:
        _, diffs = neighbor_differences(img, s)
        table = uniform_mapping(s.points)
        n_bins = s.points * (s.points - 1) + 3
        upper = table[_pack(diffs >= t)]
        lower = table[_pack(diffs <= -t)]
        blocks.append(l1_normalize(np.bincount(upper, minlength=n_bins)))
        blocks.append(l1_normalize(np.bincount(lower, minlength=n_bins)))
    return FeatureVector("ltp", np.concatenate(blocks))


def clbp_dim(scales) -> int:
    return sum(2 * (s.points + 2) ** 2 for s in scales)


def extract_clbp(img: np.ndarray, scales=DEFAULT_SCALES) -> FeatureVector:
    """Joint CLBP_S/M/C histogram per scale with riu2 mapping of S and M.

    S bit: difference > 0. M bit: magnitude > mean magnitude (a tie is 0).
    C bit: centre >= mean centre intensity (a tie is 1).
    """
    img = np.asarray(img, dtype=np.float64)
    blocks = []
    for s in scales:
        s = s if isinstance(s, NeighborhoodConfig) else NeighborhoodConfig(*s)
        centre, diffs = neighbor_differences(img, s)
        table = riu2_mapping(s.points)
        mag = np.abs(diffs)
        s_code = table[_pack(diffs > 0)]
        m_code = table[_pack(mag > mag.mean())]
        # n*c >= sum(c) rather than c >= mean(c): exact for integer-valued images
        c_bit = (centre * centre.size >= centre.sum()).astype(np.int64)
        k = s.points + 2
        joint = (s_code * k + m_code) * 2 + c_bit
        blocks.append(l1_normalize(np.bincount(joint, minlength=2 * k * k)))
    return FeatureVector("clbp", np.concatenate(blocks))


def rot180(code):
    """Rotate a 4-neighbour code by two positions."""
    return ((code << 2) | (code >> 2)) & 0xF


@lru_cache(maxsize=None)
def ric_classes() -> np.ndarray:
    """Map each pair label ``16*A + B`` to one of 136 classes under (A, B) ~ (rot180(B), rot180(A))."""
    canon = np.empty(256, dtype=np.int64)
    for a in range(16):
        for b in range(16):
            canon[16 * a + b] = min(16 * a + b, 16 * rot180(b) + rot180(a))
    reps = np.unique(canon)
    assert len(reps) == 136
    table = np.searchsorted(reps, canon)
    table.setflags(write=False)
    return table


def _lbp4_codes(img, r, wrap):
    h, w = img.shape
    # neighbours at angles 0, 90, 180, 270 degrees: +x, -y, -x, +y
    steps = ((0, r), (-r, 0), (0, -r), (r, 0))
    if wrap:
        code = np.zeros(img.shape, dtype=np.int64)
        for k, (dy, dx) in enumerate(steps):
            nb = np.roll(img, shift=(-dy, -dx), axis=(0, 1))
            code |= (nb > img).astype(np.int64) << k
        return code
    if h < 2 * r + 1 or w < 2 * r + 1:
        raise ValueError(f"{w}x{h} image too small for RIC radius {r}")
    centre = img[r:h - r, r:w - r]
    code = np.zeros(centre.shape, dtype=np.int64)
    for k, (dy, dx) in enumerate(steps):
        nb = img[r + dy:h - r + dy, r + dx:w - r + dx]
        code |= (nb > centre).astype(np.int64) << k
    return code


def _pair_labels(code, d, wrap):
    labels = []
    for dy, dx in ((0, d), (d, 0), (d, d), (-d, d)):
        if wrap:
            other = np.roll(code, shift=(-dy, -dx), axis=(0, 1))
            labels.append((16 * code + other).ravel())
            continue
        h, w = code.shape
        y0, y1 = max(0, -dy), min(h, h - dy)
        x0, x1 = max(0, -dx), min(w, w - dx)
        if y1 <= y0 or x1 <= x0:
            continue
        a = code[y0:y1, x0:x1]
        b = code[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
        labels.append((16 * a + b).ravel())
    if not labels:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(labels)


def extract_riclbp(img: np.ndarray, configs=DEFAULT_RIC, wrap: bool = False) -> FeatureVector:
    """Rotation-invariant co-occurrence of adjacent 4-neighbour LBP codes.

    Each ``(radius, displacement)`` pair contributes one 136-bin histogram
    over the displacements (d,0), (0,d), (d,d) and (d,-d). ``wrap=True``
    evaluates codes and pairs on the torus. A config whose displacement
    leaves no pair inside the image yields an all-zero block.
    """
    img = np.asarray(img, dtype=np.float64)
    classes = ric_classes()
    blocks = []
    for r, d in configs:
        code = _lbp4_codes(img, int(r), wrap)
        labels = _pair_labels(code, int(d), wrap)
        blocks.append(l1_normalize(np.bincount(classes[labels], minlength=136)))
    return FeatureVector("ric", np.concatenate(blocks))
