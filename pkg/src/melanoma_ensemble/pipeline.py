"""Stage orchestration: extract, train/predict, fuse, evaluate.

Output layout under ``cfg.out``::

    features/<variant>__<split>.csv
    models/<member>.svm.csv, models/<member>.pca.csv, models/<member>.json
    scores/<member>__<split>.csv, scores/fusion__<split>.csv
    fusion/norm__<member>.json, fusion/fusion.json
    report.json, report.txt, timing.json
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import reduce
from .config import PipelineConfig
from .errors import ConfigError, DataError
from .formats import (FeatureMatrix, ScoreMatrix, atomic_write_text, parse_header, read_feature_file,
                      read_score_file, write_feature_file, write_score_file)
from .fusion import EnsembleMember, is_random, sum_rule, znorm_apply, znorm_fit
from .imagedata import DatasetManifest, augment, load_image, load_manifest, prepare_input, to_grayscale
from .metrics import confusion, report as metrics_report
from .svm import KernelParams, default_gamma_grid, load_ova, save_ova, score_matrix, train_ova, tune

log = logging.getLogger(__name__)

AUG_SEP = "@aug"


def _sha(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def _file_sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _base_id(rid: str) -> str:
    return rid.split(AUG_SEP, 1)[0]


# ---------------------------------------------------------------- extract


def _image_hashes(rows):
    hashes, missing = [], []
    for r in rows:
        try:
            hashes.append(_file_sha(r.path))
        except OSError:
            missing.append(r.id)
    if missing:
        # report every bad image at once, including present files that do not decode
        bad = set(missing)
        for r in rows:
            if r.id not in bad:
                try:
                    load_image(r.path)
                except DataError:
                    bad.add(r.id)
        raise DataError(f"unreadable images for ids: {', '.join(r.id for r in rows if r.id in bad)}")
    return hashes


def _prepare(cfg: PipelineConfig, rgb):
    if not cfg.prepare:
        return rgb
    crop = tuple(cfg.prepare.get("crop", (150, 200)))
    return prepare_input(rgb, cfg.prepare["strategy"], tuple(cfg.prepare["target"]), crop)


def _features_for(cfg, variants, rgb):
    prepared = _prepare(cfg, rgb)
    shape_src = rgb if cfg.descriptor_input == "original" else prepared
    gray_prep = to_grayscale(prepared)
    gray_shape = gray_prep if shape_src is prepared else to_grayscale(shape_src)
    out = []
    for v in variants:
        if v.descriptor_id in ("col", "mor"):
            out.append(v.extract(shape_src, gray_shape))
        else:
            out.append(v.extract(prepared, gray_prep))
    return out


def _extract_image(cfg, variants, row, copies, aug_params, draw_base):
    """Return [(row_id, [vector per variant])] for one image and its augmented copies."""
    try:
        rgb = load_image(row.path)
    except DataError:
        return row.id, None
    results = [(row.id, _features_for(cfg, variants, rgb))]
    for k in range(copies):
        aug = augment(rgb, aug_params, draw_base + k)
        results.append((f"{row.id}{AUG_SEP}{k}", _features_for(cfg, variants, aug)))
    return row.id, results


def feature_path(cfg: PipelineConfig, variant_id: str, split: str) -> Path:
    return cfg.out / "features" / f"{variant_id}__{split}.csv"


def _cached_hash(path: Path):
    if not path.exists():
        return None
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
    try:
        return parse_header(first).get("config_hash")
    except DataError:
        return None


def cmd_extract(cfg: PipelineConfig) -> dict:
    """Write one feature file per (variant, split); unchanged inputs are served from cache."""
    manifest = load_manifest(cfg.manifest)
    variants = cfg.variants()
    copies, aug_params = cfg.augment_params()
    status = {}
    for split in manifest.splits_present():
        rows = manifest.split(split)
        hashes = _image_hashes(rows)
        split_copies = copies if split == "train" else 0
        common = {
            "split": split,
            "images": [[r.id, h] for r, h in zip(rows, hashes)],
            "prepare": cfg.prepare,
            "descriptor_input": cfg.descriptor_input,
            "augment": [split_copies, asdict(aug_params) if (aug_params and split_copies) else None],
        }
        todo = []
        for v in variants:
            key = _sha({"variant": v.cache_key(), **common})
            path = feature_path(cfg, v.variant_id, split)
            if _cached_hash(path) == key:
                log.info("cache hit: %s", path.name)
                status[(v.variant_id, split)] = "cached"
            else:
                todo.append((v, key, path))
        if not todo:
            continue
        todo_variants = [t[0] for t in todo]
        index = {r.id: i for i, r in enumerate(manifest.rows)}
        jobs = [(r, index[r.id] * max(split_copies, 1)) for r in rows]
        if cfg.jobs > 1 and len(rows) > 1:
            from joblib import Parallel, delayed
            results = Parallel(n_jobs=cfg.jobs)(
                delayed(_extract_image)(cfg, todo_variants, r, split_copies, aug_params, base) for r, base in jobs)
        else:
            results = [_extract_image(cfg, todo_variants, r, split_copies, aug_params, base) for r, base in jobs]
        bad = [rid for rid, res in results if res is None]
        if bad:
            raise DataError(f"unreadable images for ids: {', '.join(bad)}")
        flat = [item for _, res in results for item in res]
        ids = [rid for rid, _ in flat]
        for k, (v, key, path) in enumerate(todo):
            data = np.array([vecs[k] for _, vecs in flat]).reshape(len(flat), v.dim)
            write_feature_file(path, FeatureMatrix(ids, data, v.descriptor_id),
                               extra={"variant": v.variant_id, "config_hash": key})
            log.info("extracted %s (%d rows, dim %d)", path.name, len(ids), v.dim)
            status[(v.variant_id, split)] = "computed"
    return status


# ---------------------------------------------------------------- train / predict


@dataclass
class MemberSource:
    member_id: str
    kind: str  # "internal" or "external_features"
    files: dict  # split -> Path


def feature_members(cfg: PipelineConfig, manifest: DatasetManifest) -> list[MemberSource]:
    splits = manifest.splits_present()
    out = [MemberSource(v.variant_id, "internal", {s: feature_path(cfg, v.variant_id, s) for s in splits})
           for v in cfg.variants()]
    for n, e in enumerate(cfg.external_features):
        files = _external_split_files(e, splits)
        mid = e.get("member_id") or _stem_member(files["train"])
        out.append(MemberSource(mid, "external_features", files))
    ids = [m.member_id for m in out]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"member ids must be unique, got {ids}")
    return out


def _stem_member(path: Path) -> str:
    stem = path.stem
    for s in ("train", "val", "test"):
        if stem.endswith(f"__{s}"):
            return stem[: -len(s) - 2]
    return stem


def train_sibling(path, split="train") -> Path:
    """Path of the ``<member>__<split>.csv`` sibling of a split-tagged score or feature file."""
    path = Path(path)
    stem = path.stem
    for s in ("train", "val", "test"):
        if stem.endswith(f"__{s}"):
            return path.with_name(f"{stem[: -len(s) - 2]}__{split}{path.suffix}")
    raise DataError(f"{path}: file name must end in __train/__val/__test to locate its siblings")


def _external_split_files(entry: dict, splits) -> dict:
    if "path" in entry:
        files = {s: train_sibling(entry["path"], s) for s in splits}
    else:
        files = {s: entry[s] for s in splits if s in entry}
    if "train" not in files or not Path(files["train"]).exists():
        raise DataError(f"external member needs a train-split file; missing {files.get('train')}")
    for s, p in files.items():
        if not Path(p).exists():
            raise DataError(f"external member file for split {s!r} not found: {p}")
    return files


def _labels_for(manifest: DatasetManifest, ids, split, allow_aug=False):
    lab = {r.id: r.label for r in manifest.split(split)}
    out = []
    for rid in ids:
        base = _base_id(rid) if allow_aug else rid
        if base not in lab:
            raise DataError(f"id {rid!r} is not a {split} row of the manifest")
        out.append(lab[base])
    return np.array(out, dtype=int)


def _aligned(fm: FeatureMatrix, manifest, split) -> FeatureMatrix:
    """Original (non-augmented) rows in manifest order."""
    order = [r.id for r in manifest.split(split)]
    index = {rid: i for i, rid in enumerate(fm.ids)}
    missing = [rid for rid in order if rid not in index]
    if missing:
        raise DataError(f"{fm.descriptor_id}: {split} features missing ids {missing[:5]}")
    return FeatureMatrix(order, fm.data[[index[r] for r in order]], fm.descriptor_id, fm.meta)


def _apply_reduction(cfg, member_id, train: FeatureMatrix, info: dict):
    method = cfg.reduction_method
    d = train.dim
    info["dim_in"] = d
    if method == "none" or d <= cfg.target_k:
        info["reduction"] = "none" if method == "none" else f"{method}-passthrough"
        return lambda fm: fm, None
    if method == "dct":
        info["reduction"] = "dct"
        return lambda fm: reduce.dct_reduce(fm, cfg.target_k), None
    model = reduce.pca_fit(train, cfg.target_k)
    info["reduction"] = "pca"
    return lambda fm: reduce.pca_project(model, fm), model


def score_path(cfg, member_id, split) -> Path:
    return cfg.out / "scores" / f"{member_id}__{split}.csv"


def _train_member(cfg: PipelineConfig, manifest: DatasetManifest, src: MemberSource) -> dict:
    models = cfg.out / "models"
    feats = {s: read_feature_file(p) for s, p in src.files.items()}
    train = feats["train"]
    y = _labels_for(manifest, train.ids, "train", allow_aug=True)
    key = _sha({
        "train_features": _file_sha(Path(src.files["train"])),
        "reduction": cfg.reduction, "svm": cfg.svm, "seed": cfg.seed,
        "classes": manifest.class_names,
    })
    summary_path = models / f"{src.member_id}.json"
    bundle_path = models / f"{src.member_id}.svm.csv"
    pca_path = models / f"{src.member_id}.pca.csv"

    info = {"member_id": src.member_id, "source": src.kind}
    transform, pca = _apply_reduction(cfg, src.member_id, train, info)
    cached = None
    if summary_path.exists() and bundle_path.exists():
        prev = json.loads(summary_path.read_text(encoding="utf-8"))
        if prev.get("key") == key and (pca is None or pca_path.exists()):
            cached = prev
    Xtr = transform(train)
    if cached is not None:
        log.info("cache hit: model %s", src.member_id)
        model = load_ova(bundle_path)
        info = {k: cached[k] for k in cached if k != "train_bacc"}
    else:
        if pca is not None:
            reduce.save_pca(pca_path, pca)
        counts = np.bincount(y, minlength=manifest.n_classes)
        folds = min(cfg.folds, int(counts.min()))
        gammas = cfg.gamma_grid or default_gamma_grid(Xtr.dim)
        if folds >= 2:
            params = tune(Xtr.data, y, cfg.C_grid, gammas, folds, cfg.seed, manifest.class_names)
        else:
            params = KernelParams(1.0, 1.0 / max(Xtr.dim, 1))
            log.warning("%s: smallest class has %d samples; skipping tuning", src.member_id, counts.min())
        model = train_ova(Xtr.data, y, params, manifest.class_names)
        save_ova(bundle_path, model)
        info.update({"key": key, "C": params.C, "gamma": params.gamma, "folds": folds, "dim_model": Xtr.dim})

    for split, fm in feats.items():
        fm = _aligned(fm, manifest, split)
        s = score_matrix(model, transform(fm).data)
        write_score_file(score_path(cfg, src.member_id, split),
                         ScoreMatrix(fm.ids, s, src.member_id, manifest.class_names))
        if split == "train":
            cm = confusion(_labels_for(manifest, fm.ids, "train"), np.argmax(s, axis=1), manifest.n_classes)
            info["train_bacc"] = metrics_report(cm)["bacc"]
    atomic_write_text(summary_path, _dump(info))
    return info


def cmd_train_predict(cfg: PipelineConfig) -> list[dict]:
    """Reduce, tune, train and score every feature member."""
    manifest = load_manifest(cfg.manifest)
    if not any(r.split == "train" for r in manifest.rows):
        raise DataError("manifest has no train split")
    return [_train_member(cfg, manifest, src) for src in feature_members(cfg, manifest)]


# ---------------------------------------------------------------- external scores


def ingest_external_scores(path, class_names) -> ScoreMatrix:
    """Read an external member's score file and reorder its columns to ``class_names``.

    The file name must be split-tagged (``<member>__<split>.csv``) and a
    ``__train`` sibling must exist so normalisation can be fitted on it.
    """
    path = Path(path)
    sibling = train_sibling(path)
    if not sibling.exists():
        raise DataError(f"{path}: missing train-split sibling {sibling.name}")
    sm = read_score_file(path)
    return remap_columns(sm, class_names, path)


def remap_columns(sm: ScoreMatrix, class_names, origin="scores") -> ScoreMatrix:
    names = sm.class_names or []
    unknown = [n for n in names if n not in class_names]
    if unknown:
        raise DataError(f"{origin}: unknown class names {unknown}; manifest classes are {list(class_names)}")
    missing = [n for n in class_names if n not in names]
    if missing:
        raise DataError(f"{origin}: missing class columns {missing}")
    order = [names.index(n) for n in class_names]
    return ScoreMatrix(sm.ids, sm.scores[:, order], sm.member_id, list(class_names))


# ---------------------------------------------------------------- fuse / evaluate


def _member_train_bacc(manifest, train: ScoreMatrix) -> float:
    y = _labels_for(manifest, train.ids, "train")
    return metrics_report(confusion(y, train.predictions(), manifest.n_classes))["bacc"]


def collect_members(cfg: PipelineConfig, manifest: DatasetManifest) -> list[EnsembleMember]:
    """Load every member's raw score matrices aligned to manifest row order."""
    splits = manifest.splits_present()
    sources = []
    for src in feature_members(cfg, manifest):
        sources.append((src.member_id, {s: score_path(cfg, src.member_id, s) for s in splits}, "internal"))
    for e in cfg.external_scores:
        files = _external_split_files(e, splits)
        sources.append((e.get("member_id") or _stem_member(Path(files["train"])), files, "external"))
    ids = [s[0] for s in sources]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"member ids must be unique, got {ids}")

    members = []
    for mid, files, kind in sources:
        aligned = {}
        for split, p in files.items():
            if kind == "external":
                sm = ingest_external_scores(p, manifest.class_names)
            else:
                sm = remap_columns(read_score_file(p), manifest.class_names, p)
            order = [r.id for r in manifest.split(split)]
            extra = set(sm.ids) - set(order)
            if extra:
                raise DataError(f"member {mid!r} {split} scores contain ids not in the manifest split: "
                                f"{sorted(extra)[:5]}")
            sm = sm.reordered(order)
            aligned[split] = ScoreMatrix(sm.ids, sm.scores, mid, manifest.class_names)
        train = aligned.pop("train")
        members.append(EnsembleMember(mid, train, aligned, _member_train_bacc(manifest, train)))
    return members


def _norm_json(stats) -> dict:
    return {"mode": stats.mode, "means": stats.means.tolist(), "mean_residuals": stats.mean_residuals.tolist(),
            "stds": stats.stds.tolist(), "passthrough": stats.passthrough.tolist()}


@dataclass
class FusionResult:
    members: list
    kept: list
    decisions: list
    fused: dict  # split -> ScoreMatrix
    normalized: dict  # member_id -> split -> ScoreMatrix


def cmd_fuse(cfg: PipelineConfig) -> FusionResult:
    """Normalise members on their train scores, discard near-chance ones and sum the rest."""
    manifest = load_manifest(cfg.manifest)
    members = collect_members(cfg, manifest)
    if not members:
        raise DataError("no ensemble members")
    fdir = cfg.out / "fusion"
    normalized, decisions = {}, []
    for m in members:
        stats = znorm_fit(m.train_scores, cfg.fusion_mode)
        atomic_write_text(fdir / f"norm__{m.member_id}.json", _dump(_norm_json(stats)))
        normalized[m.member_id] = {"train": znorm_apply(stats, m.train_scores),
                                   **{s: znorm_apply(stats, sm) for s, sm in m.eval_scores.items()}}
        random = is_random(m, cfg.chance_margin)
        reason = (f"train bAcc {m.train_bacc:.4f} < chance 0.5 + margin {cfg.chance_margin:g}"
                  if random else "")
        decisions.append({"member_id": m.member_id, "train_bacc": m.train_bacc, "kept": not random,
                          "reason": reason})
    kept = [m for m in members if not is_random(m, cfg.chance_margin)]
    if not kept:
        atomic_write_text(fdir / "fusion.json", _dump({"members": decisions, "kept": []}))
        raise DataError("empty ensemble: every member scored at chance level on the training set")
    fused = {}
    for split in manifest.splits_present():
        fused[split] = sum_rule([normalized[m.member_id][split] for m in kept])
        write_score_file(score_path(cfg, "fusion", split), fused[split], manifest.class_names)
    atomic_write_text(fdir / "fusion.json", _dump({
        "mode": cfg.fusion_mode, "chance_margin": cfg.chance_margin,
        "members": decisions, "kept": [m.member_id for m in kept],
    }))
    return FusionResult(members, kept, decisions, fused, normalized)


@dataclass
class RunReport:
    class_names: list
    members: list = field(default_factory=list)
    fusion: dict = field(default_factory=dict)
    discarded: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return _dump(asdict(self))

    def fusion_bacc(self, split: str) -> float:
        return self.fusion[split]["bacc"]

    def member_bacc(self, member_id: str, split: str) -> float:
        for m in self.members:
            if m["member_id"] == member_id:
                return m["splits"][split]["bacc"]
        raise KeyError(member_id)

    def table(self) -> str:
        splits = list(self.fusion)
        head = f"{'member':<40} {'kept':<5} " + " ".join(f"{s + ' bAcc':>11}" for s in splits)
        lines = [head, "-" * len(head)]
        for m in self.members:
            vals = " ".join(f"{m['splits'][s]['bacc']:>11.4f}" for s in splits)
            lines.append(f"{m['member_id']:<40} {'yes' if m['kept'] else 'no':<5} {vals}")
        lines.append("-" * len(head))
        vals = " ".join(f"{self.fusion[s]['bacc']:>11.4f}" for s in splits)
        lines.append(f"{'fusion (sum rule)':<40} {'':<5} {vals}")
        vals = " ".join(f"{self.fusion[s]['mean_recall']:>11.4f}" for s in splits)
        lines.append(f"{'fusion mean recall':<40} {'':<5} {vals}")
        for d in self.discarded:
            lines.append(f"discarded {d['member_id']}: {d['reason']}")
        return "\n".join(lines) + "\n"


def _member_reduction(cfg, member_id):
    """Reduction applied to a trained member, or ``None`` for external score members."""
    path = cfg.out / "models" / f"{member_id}.json"
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8")).get("reduction")


def cmd_evaluate(cfg: PipelineConfig, fusion: FusionResult | None = None) -> RunReport:
    """Score every member and the fusion on each split; write report.json and report.txt."""
    manifest = load_manifest(cfg.manifest)
    if fusion is None:
        fusion = cmd_fuse(cfg)
    kept_ids = {m.member_id for m in fusion.kept}
    rep = RunReport(manifest.class_names, config=cfg.echo())
    for m, d in zip(fusion.members, fusion.decisions):
        entry = {"member_id": m.member_id, "train_bacc": m.train_bacc, "kept": m.member_id in kept_ids,
                 "reduction": _member_reduction(cfg, m.member_id), "splits": {}}
        for split, sm in fusion.normalized[m.member_id].items():
            y = _labels_for(manifest, sm.ids, split)
            r = metrics_report(confusion(y, sm.predictions(), manifest.n_classes, manifest.class_names))
            entry["splits"][split] = {"bacc": r["bacc"], "mean_recall": r["mean_recall"]}
        rep.members.append(entry)
        if not d["kept"]:
            rep.discarded.append({"member_id": m.member_id, "reason": d["reason"]})
    for split, sm in fusion.fused.items():
        y = _labels_for(manifest, sm.ids, split)
        rep.fusion[split] = metrics_report(confusion(y, sm.predictions(), manifest.n_classes, manifest.class_names))
    atomic_write_text(cfg.out / "report.json", rep.to_json())
    atomic_write_text(cfg.out / "report.txt", rep.table())
    return rep


def cmd_fuse_evaluate(cfg: PipelineConfig) -> RunReport:
    return cmd_evaluate(cfg, cmd_fuse(cfg))


def run_all(cfg: PipelineConfig) -> RunReport:
    timing = {}
    t0 = time.perf_counter()
    if cfg.variants():
        cmd_extract(cfg)
    timing["extract"] = time.perf_counter() - t0
    t1 = time.perf_counter()
    cmd_train_predict(cfg)
    timing["train"] = time.perf_counter() - t1
    t2 = time.perf_counter()
    rep = cmd_fuse_evaluate(cfg)
    timing["fuse_evaluate"] = time.perf_counter() - t2
    timing["total"] = time.perf_counter() - t0
    # kept out of report.json so identical runs produce identical reports
    atomic_write_text(cfg.out / "timing.json", _dump(timing))
    return rep
