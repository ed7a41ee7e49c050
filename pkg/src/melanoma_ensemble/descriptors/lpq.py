"""Local phase quantization with a configurable binarisation threshold."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .base import FeatureVector, l1_normalize

REGULARIZATION = 1e-9


@dataclass(frozen=True)
class LpqParams:
    """``win_radius`` R gives a (2R+1)^2 window; the frequency is ``freq_scale / (2R+1)``;
    ``rho`` is the adjacent-pixel correlation of the Markov decorrelation model and
    ``tau`` the threshold applied to each whitened component."""

    win_radius: int = 1
    freq_scale: float = 1.0
    rho: float = 0.9
    tau: float = 0.0

    def __post_init__(self):
        if self.win_radius < 1:
            raise ValueError(f"win_radius must be >= 1, got {self.win_radius}")
        if not self.freq_scale > 0:
            raise ValueError(f"freq_scale must be > 0, got {self.freq_scale}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")

    @property
    def window(self) -> int:
        return 2 * self.win_radius + 1

    @property
    def frequency(self) -> float:
        return self.freq_scale / self.window


@lru_cache(maxsize=None)
def stft_filters(win_radius: int, freq_scale: float) -> np.ndarray:
    """Real and imaginary parts of the four frequency filters, shape (8, w, w).

    Row order: Re/Im at u1=(f,0), u2=(0,f), u3=(f,f), u4=(f,-f); axis 1 is y, axis 2 is x.
    """
    w = 2 * win_radius + 1
    f = freq_scale / w
    x = np.arange(-win_radius, win_radius + 1, dtype=np.float64)
    ky, kx = np.meshgrid(x, x, indexing="ij")
    out = np.empty((8, w, w))
    for i, (ux, uy) in enumerate(((f, 0.0), (0.0, f), (f, f), (f, -f))):
        phase = -2.0 * np.pi * (ux * kx + uy * ky)
        out[2 * i] = np.cos(phase)
        out[2 * i + 1] = np.sin(phase)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def whitening_matrix(win_radius: int, freq_scale: float, rho: float) -> np.ndarray:
    """8x8 transform decorrelating the STFT components under a Markov pixel model.

    Pixel covariance is ``rho ** distance``. The component covariance
    ``M C M^T + 1e-9 I`` is eigendecomposed; rows are eigenvectors in
    descending |eigenvalue| order scaled by ``|eigenvalue| ** -0.5`` (the
    absolute value keeps rho >= 1 usable), each signed so its
    largest-magnitude entry is positive.
    """
    w = 2 * win_radius + 1
    x = np.arange(-win_radius, win_radius + 1, dtype=np.float64)
    ky, kx = np.meshgrid(x, x, indexing="ij")
    pos = np.stack([ky.ravel(), kx.ravel()], axis=1)
    dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1))
    cov = np.power(float(rho), dist)
    m = stft_filters(win_radius, freq_scale).reshape(8, w * w)
    d = m @ cov @ m.T + REGULARIZATION * np.eye(8)
    d = (d + d.T) / 2
    evals, evecs = np.linalg.eigh(d)
    order = np.argsort(-np.abs(evals), kind="stable")
    evals, evecs = evals[order], evecs[:, order]
    rows = evecs.T.copy()
    for r in rows:
        if r[np.argmax(np.abs(r))] < 0:
            r *= -1
    wm = rows / np.sqrt(np.maximum(np.abs(evals), REGULARIZATION))[:, None]
    wm.setflags(write=False)
    return wm


def lpq_components(img: np.ndarray, p: LpqParams) -> np.ndarray:
    """Whitened components for every pixel whose window fits, shape (8, h', w')."""
    img = np.asarray(img, dtype=np.float64)
    win = p.window
    h, w = img.shape
    if h < win or w < win:
        raise ValueError(f"{w}x{h} image smaller than the {win}x{win} LPQ window")
    filters = stft_filters(p.win_radius, p.freq_scale)
    oh, ow = h - win + 1, w - win + 1
    raw = np.zeros((8, oh, ow))
    # explicit accumulation in window order keeps results identical for identical windows
    for a in range(win):
        for b in range(win):
            patch = img[a:a + oh, b:b + ow]
            for i in range(8):
                raw[i] += filters[i, a, b] * patch
    wm = whitening_matrix(p.win_radius, p.freq_scale, p.rho)
    out = np.zeros_like(raw)
    for j in range(8):
        for i in range(8):
            out[j] += wm[j, i] * raw[i]
    return out


def extract_lpq(img: np.ndarray, p: LpqParams = LpqParams()) -> FeatureVector:
    """256-bin histogram of 8-bit codes, bit j set when whitened component j >= tau."""
    comps = lpq_components(img, p)
    code = np.zeros(comps.shape[1:], dtype=np.int64)
    for j in range(8):
        code |= (comps[j] >= p.tau).astype(np.int64) << j
    return FeatureVector("lpq", l1_normalize(np.bincount(code.ravel(), minlength=256)))
