"""JSON pipeline configuration."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .descriptors import Variant, build_variants
from .errors import ConfigError
from .fusion import DEFAULT_MARGIN, MODES
from .imagedata import CR1_CROP, AugmentParams
from .reduce import DEFAULT_TARGET
from .svm import DEFAULT_C_GRID

SPLIT_KEYS = ("train", "val", "test")


@dataclass
class PipelineConfig:
    manifest: Path
    out: Path
    descriptors: list = field(default_factory=list)
    prepare: dict | None = None
    descriptor_input: str = "original"
    augment: dict | None = None
    reduction: dict = field(default_factory=lambda: {"method": "none", "target_k": DEFAULT_TARGET})
    svm: dict = field(default_factory=dict)
    fusion: dict = field(default_factory=dict)
    external_scores: list = field(default_factory=list)
    external_features: list = field(default_factory=list)
    seed: int = 0
    jobs: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def reduction_method(self) -> str:
        return self.reduction.get("method", "none")

    @property
    def target_k(self) -> int:
        return int(self.reduction.get("target_k", DEFAULT_TARGET))

    @property
    def C_grid(self) -> list:
        return [float(c) for c in self.svm.get("C_grid", DEFAULT_C_GRID)]

    @property
    def gamma_grid(self):
        g = self.svm.get("gamma_grid")
        return None if g is None else [float(v) for v in g]

    @property
    def folds(self) -> int:
        return int(self.svm.get("folds", 5))

    @property
    def fusion_mode(self) -> str:
        return self.fusion.get("mode", "global")

    @property
    def chance_margin(self) -> float:
        return float(self.fusion.get("chance_margin", DEFAULT_MARGIN))

    def augment_params(self) -> tuple[int, AugmentParams | None]:
        if not self.augment or int(self.augment.get("copies", 0)) <= 0:
            return 0, None
        kw = {k: v for k, v in self.augment.items() if k != "copies"}
        if "scale_range" in kw:
            kw["scale_range"] = tuple(kw["scale_range"])
        kw.setdefault("seed", self.seed)
        return int(self.augment["copies"]), AugmentParams(**kw)

    def variants(self) -> list[Variant]:
        out, seen = [], set()
        for entry in self.descriptors:
            prefix = entry.get("name")
            for v in build_variants(entry):
                if prefix:
                    v = Variant(f"{prefix}_{v.variant_id}", v.descriptor_id, v.params, v.uses_color, v.fn, v.dim)
                if v.variant_id in seen:
                    raise ConfigError(f"duplicate descriptor variant {v.variant_id!r}; give the entry a distinct 'name'")
                seen.add(v.variant_id)
                out.append(v)
        return out

    def echo(self) -> dict:
        """The configuration as it was read, with command-line overrides applied."""
        e = copy.deepcopy(self.raw)
        e["seed"] = self.seed
        return e


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _split_paths(base, entry, kind):
    if isinstance(entry, str):
        return {"member_id": None, "path": _resolve(base, entry)}
    if not isinstance(entry, dict) or "train" not in entry:
        raise ConfigError(f"{kind} entries need a path string or a dict with at least a 'train' path")
    out = {"member_id": entry.get("member_id")}
    for s in SPLIT_KEYS:
        if s in entry:
            out[s] = _resolve(base, entry[s])
    return out


def parse_config(raw: dict, base_dir=".", out=None, seed=None, jobs=None) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    base = Path(base_dir)
    if "manifest" not in raw:
        raise ConfigError("config is missing 'manifest'")
    known = {"manifest", "out", "descriptors", "prepare", "descriptor_input", "augment", "reduction",
             "svm", "fusion", "external_scores", "external_features", "seed", "jobs"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")

    out_dir = out if out is not None else raw.get("out")
    if out_dir is None:
        raise ConfigError("no output directory: set 'out' in the config or pass --out")
    cfg = PipelineConfig(
        manifest=_resolve(base, raw["manifest"]),
        out=Path(out_dir) if out is not None else _resolve(base, out_dir),
        descriptors=list(raw.get("descriptors", [])),
        prepare=raw.get("prepare"),
        descriptor_input=raw.get("descriptor_input", "original"),
        augment=raw.get("augment"),
        reduction=dict(raw.get("reduction") or {"method": "none"}),
        svm=dict(raw.get("svm") or {}),
        fusion=dict(raw.get("fusion") or {}),
        external_scores=[_split_paths(base, e, "external_scores") for e in raw.get("external_scores", [])],
        external_features=[_split_paths(base, e, "external_features") for e in raw.get("external_features", [])],
        seed=int(seed if seed is not None else raw.get("seed", 0)),
        jobs=int(jobs if jobs is not None else raw.get("jobs", 1)),
        raw=raw,
    )
    _validate(cfg)
    return cfg


def _validate(cfg: PipelineConfig) -> None:
    if not isinstance(cfg.descriptors, list) or not all(isinstance(d, dict) and "id" in d for d in cfg.descriptors):
        raise ConfigError("'descriptors' must be a list of objects with an 'id'")
    cfg.variants()  # rejects unknown and out-of-scope ids
    if not cfg.descriptors and not cfg.external_scores and not cfg.external_features:
        raise ConfigError("nothing to do: no descriptors, external features or external scores")
    if cfg.prepare is not None:
        if cfg.prepare.get("strategy") not in ("Res", "Cr1"):
            raise ConfigError("prepare.strategy must be 'Res' or 'Cr1'")
        target = cfg.prepare.get("target")
        if not (isinstance(target, list) and len(target) == 2 and all(int(t) >= 1 for t in target)):
            raise ConfigError("prepare.target must be [width, height] with both >= 1")
        crop = cfg.prepare.get("crop", list(CR1_CROP))
        if not (isinstance(crop, list) and len(crop) == 2 and all(int(c) >= 1 for c in crop)):
            raise ConfigError("prepare.crop must be [height, width] with both >= 1")
    if cfg.descriptor_input not in ("original", "prepared"):
        raise ConfigError("descriptor_input must be 'original' or 'prepared'")
    if cfg.reduction_method not in ("none", "pca", "dct"):
        raise ConfigError("reduction.method must be 'none', 'pca' or 'dct'")
    if cfg.target_k < 1:
        raise ConfigError("reduction.target_k must be >= 1")
    if any(c <= 0 for c in cfg.C_grid) or not cfg.C_grid:
        raise ConfigError("svm.C_grid must be a non-empty list of positive values")
    if cfg.gamma_grid is not None and (not cfg.gamma_grid or any(g <= 0 for g in cfg.gamma_grid)):
        raise ConfigError("svm.gamma_grid must be a non-empty list of positive values")
    if cfg.folds < 2:
        raise ConfigError("svm.folds must be >= 2")
    if cfg.fusion_mode not in MODES:
        raise ConfigError(f"fusion.mode must be one of {MODES}")
    if cfg.chance_margin < 0:
        raise ConfigError("fusion.chance_margin must be >= 0")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    try:
        cfg.augment_params()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"augment: {exc}") from None


def load_config(path, out=None, seed=None, jobs=None) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw, path.parent, out=out, seed=seed, jobs=jobs)
