"""Handcrafted descriptors and the registry that turns config entries into extractors."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigError
from ..imagedata import to_grayscale
from .base import FeatureVector, l1_normalize
from .bsif import BsifConfig, FilterBank, default_bank, extract_bsif, load_filter_bank, save_filter_bank
from .color import extract_col
from .hog import extract_hog
from .lbp import DEFAULT_RIC, DEFAULT_SCALES, LtpConfig, extract_clbp, extract_ltp, extract_riclbp
from .lpq import LpqParams, extract_lpq
from .morph import extract_mor
from .sampling import NeighborhoodConfig, sample_circular

IMPLEMENTED = ("ltp", "clbp", "ric", "hog", "lpq", "mlpq", "bsif", "fbsif", "col", "mor")
OUT_OF_SCOPE = ("gold", "clm", "let", "ahp")

DIMS = {"ltp": 604, "clbp": 848, "ric": 408, "hog": 270, "lpq": 256, "bsif": 256, "col": 12, "mor": 8}

MLPQ_TAU = (0.2, 0.4, 0.6, 0.8, 1.0)
MLPQ_R = (1, 3, 5)
MLPQ_A = (0.8, 1.0, 1.2, 1.4, 1.6)
MLPQ_RHO = (0.75, 0.95, 1.15, 1.35, 1.55, 1.75, 1.95)
FBSIF_SIZES = (3, 5, 7, 9, 11)
FBSIF_TH = (-9, -6, -3, 0, 3, 6, 9)


def enumerate_variant_grids(which: str) -> list:
    """Full parameter grids, lexicographic with the first parameter varying slowest.

    ``mlpq``: tau, R, a, rho (525 LpqParams). ``fbsif``: size, threshold (35 BsifConfig).
    """
    if which == "mlpq":
        return [LpqParams(win_radius=r, freq_scale=a, rho=rho, tau=tau)
                for tau, r, a, rho in itertools.product(MLPQ_TAU, MLPQ_R, MLPQ_A, MLPQ_RHO)]
    if which == "fbsif":
        return [BsifConfig(filter_size=s, threshold=float(th))
                for s, th in itertools.product(FBSIF_SIZES, FBSIF_TH)]
    raise ValueError(f"unknown variant grid {which!r} (expected 'mlpq' or 'fbsif')")


@dataclass(frozen=True)
class Variant:
    """One concrete extractor. ``params`` is a JSON-serialisable echo used for cache keys."""

    variant_id: str
    descriptor_id: str
    params: dict
    uses_color: bool
    fn: Callable = field(repr=False, compare=False)
    dim: int = 0

    def extract(self, rgb: np.ndarray, gray: np.ndarray | None = None) -> np.ndarray:
        if self.uses_color:
            values = self.fn(rgb)
        else:
            values = self.fn(to_grayscale(rgb) if gray is None else gray)
        values = np.asarray(values, dtype=np.float64)
        if values.size != self.dim:
            raise AssertionError(f"{self.variant_id}: produced dim {values.size}, expected {self.dim}")
        return values

    def cache_key(self) -> str:
        return json.dumps({"variant": self.variant_id, "params": self.params}, sort_keys=True)


def _lpq_id(p: LpqParams) -> str:
    return f"lpq_t{p.tau:g}_r{p.win_radius}_a{p.freq_scale:g}_p{p.rho:g}"


def _bsif_id(c: BsifConfig) -> str:
    return f"bsif_s{c.filter_size}_th{c.threshold:g}"


def _select(grid, entry):
    chosen = entry.get("variants", "all")
    if chosen == "all":
        return list(grid)
    try:
        return [grid[int(i)] for i in chosen]
    except (IndexError, ValueError, TypeError):
        raise ConfigError(f"{entry['id']}: 'variants' must be 'all' or indices into the {len(grid)}-entry grid") from None


def _concat(fns):
    return lambda img: np.concatenate([np.asarray(f(img)) for f in fns])


def _bank_for(entry, size):
    banks = entry.get("banks") or {}
    path = banks.get(str(size))
    return load_filter_bank(path) if path else default_bank(size)


def build_variants(entry: dict) -> list[Variant]:
    """Expand a config entry ``{"id": ..., <params>}`` into extractors.

    ``mlpq``/``fbsif`` yield one variant per grid point (``"mode": "ensemble"``)
    or a single concatenated variant (``"mode": "concat"``).
    """
    did = str(entry.get("id", "")).lower()
    if did in OUT_OF_SCOPE:
        raise ConfigError(f"descriptor {did!r} is unimplemented, out of scope")
    if did not in IMPLEMENTED:
        raise ConfigError(f"unknown descriptor {did!r}; implemented: {', '.join(IMPLEMENTED)}")
    try:
        return _build(did, entry)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"descriptor {did!r}: {exc}") from None


def _build(did, entry):
    if did == "ltp":
        cfg = LtpConfig(
            scales=tuple(NeighborhoodConfig(*s) for s in entry.get("scales", [(1, 8), (2, 16)])),
            threshold=float(entry.get("threshold", 3.0)),
        )
        params = {"scales": [[s.radius, s.points] for s in cfg.scales], "threshold": cfg.threshold}
        dim = sum(2 * (s.points * (s.points - 1) + 3) for s in cfg.scales)
        return [Variant("ltp", "ltp", params, False, lambda g: extract_ltp(g, cfg), dim)]
    if did == "clbp":
        scales = tuple(NeighborhoodConfig(*s) for s in entry.get("scales", [(1, 8), (2, 16)]))
        dim = sum(2 * (s.points + 2) ** 2 for s in scales)
        params = {"scales": [[s.radius, s.points] for s in scales]}
        return [Variant("clbp", "clbp", params, False, lambda g: extract_clbp(g, scales), dim)]
    if did == "ric":
        configs = tuple(tuple(int(v) for v in c) for c in entry.get("configs", DEFAULT_RIC))
        params = {"configs": [list(c) for c in configs]}
        return [Variant("ric", "ric", params, False, lambda g: extract_riclbp(g, configs), 136 * len(configs))]
    if did == "hog":
        return [Variant("hog", "hog", {}, False, extract_hog, 270)]
    if did == "col":
        return [Variant("col", "col", {}, True, extract_col, 12)]
    if did == "mor":
        return [Variant("mor", "mor", {}, False, extract_mor, 8)]
    if did == "lpq":
        p = LpqParams(
            win_radius=int(entry.get("win_radius", 1)),
            freq_scale=float(entry.get("freq_scale", 1.0)),
            rho=float(entry.get("rho", 0.9)),
            tau=float(entry.get("tau", 0.0)),
        )
        return [Variant(_lpq_id(p), "lpq", _lpq_params(p), False, lambda g: extract_lpq(g, p), 256)]
    if did == "bsif":
        size = int(entry.get("filter_size", 7))
        bank = _bank_for(entry, size)
        c = BsifConfig(filter_size=size, threshold=float(entry.get("threshold", 0.0)), bank=bank)
        return [Variant(_bsif_id(c), "bsif", _bsif_params(c), False, lambda g: extract_bsif(g, c), 256)]

    mode = entry.get("mode", "ensemble")
    if mode not in ("ensemble", "concat"):
        raise ConfigError(f"{did}: mode must be 'ensemble' or 'concat', got {mode!r}")
    if did == "mlpq":
        grid = _select(enumerate_variant_grids("mlpq"), entry)
        variants = [Variant(_lpq_id(p), "lpq", _lpq_params(p), False,
                            (lambda q: (lambda g: extract_lpq(g, q)))(p), 256) for p in grid]
    else:
        grid = _select(enumerate_variant_grids("fbsif"), entry)
        grid = [BsifConfig(c.filter_size, c.threshold, _bank_for(entry, c.filter_size)) for c in grid]
        variants = [Variant(_bsif_id(c), "bsif", _bsif_params(c), False,
                            (lambda q: (lambda g: extract_bsif(g, q)))(c), 256) for c in grid]
    if mode == "ensemble":
        return variants
    params = {"mode": "concat", "parts": [v.params for v in variants]}
    return [Variant(did, did, params, False, _concat([v.fn for v in variants]), 256 * len(variants))]


def _lpq_params(p):
    return {"win_radius": p.win_radius, "freq_scale": p.freq_scale, "rho": p.rho, "tau": p.tau}


def _bsif_params(c):
    # the bank content is part of the key so a changed bank file invalidates caches
    return {"filter_size": c.filter_size, "threshold": c.threshold,
            "bank": [float(v) for v in c.bank.coefficients.ravel()]}


__all__ = [
    "BsifConfig", "DIMS", "FeatureVector", "FilterBank", "IMPLEMENTED", "LpqParams", "LtpConfig",
    "NeighborhoodConfig", "OUT_OF_SCOPE", "Variant", "build_variants", "default_bank",
    "enumerate_variant_grids", "extract_bsif", "extract_clbp", "extract_col", "extract_hog",
    "extract_lpq", "extract_ltp", "extract_mor", "extract_riclbp", "l1_normalize",
    "load_filter_bank", "sample_circular", "save_filter_bank",
]
