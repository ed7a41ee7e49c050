"""Text file formats: feature files, score files and atomic writes.

Feature file::

    # descriptor_id=ltp;dim=604
    img1,0.1,0.0,...

Score file::

    # member_id=ltp
    id,akiec,bcc,...
    img1,-0.3,1.2,...

Floats are written with ``repr`` so a write/read round trip is lossless and
reruns produce byte-identical files.
"""

from __future__ import annotations

import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_float(v: float) -> str:
    return repr(float(v))


def parse_header(line: str) -> dict[str, str]:
    """Parse a ``# key=value;key=value`` comment line."""
    if not line.startswith("#"):
        raise DataError(f"expected '#' header line, got {line[:40]!r}")
    out = {}
    for part in line[1:].strip().split(";"):
        part = part.strip()
        if not part:
            continue
        key, sep, value = part.partition("=")
        out[key.strip()] = value.strip() if sep else ""
    return out


def format_header(fields: dict) -> str:
    return "# " + ";".join(f"{k}={v}" if v != "" else k for k, v in fields.items())


def _parse_row(parts, path, lineno):
    try:
        values = [float(v) for v in parts]
    except ValueError as exc:
        raise DataError(f"{path}: line {lineno}: non-numeric value ({exc})") from None
    for col, v in enumerate(values):
        if not math.isfinite(v):
            raise DataError(f"{path}: row {lineno}, column {col}: non-finite value {v}")
    return values


class FeatureMatrix:
    """Row-keyed real matrix tagged with the descriptor that produced it."""

    def __init__(self, ids, data, descriptor_id: str, meta: dict | None = None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            data = data.reshape(len(ids), -1) if len(ids) else data.reshape(0, 0)
        ids = [str(i) for i in ids]
        if data.shape[0] != len(ids):
            raise DataError(f"{len(ids)} ids but {data.shape[0]} rows")
        if not np.all(np.isfinite(data)):
            raise DataError(f"feature matrix {descriptor_id!r} has non-finite entries")
        self.ids = ids
        self.data = data
        self.descriptor_id = descriptor_id
        self.meta = dict(meta or {})

    @property
    def dim(self) -> int:
        return int(self.data.shape[1]) if self.data.ndim == 2 else 0

    def __len__(self):
        return len(self.ids)

    def __repr__(self):
        return f"FeatureMatrix({self.descriptor_id!r}, n={len(self.ids)}, dim={self.dim})"


def write_feature_file(path, fm: FeatureMatrix, extra: dict | None = None) -> None:
    header = {"descriptor_id": fm.descriptor_id, "dim": fm.dim}
    header.update(extra or {})
    lines = [format_header(header)]
    for rid, row in zip(fm.ids, fm.data):
        lines.append(",".join([rid] + [fmt_float(v) for v in row]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_feature_file(path) -> FeatureMatrix:
    path = Path(path)
    if not path.exists():
        raise DataError(f"feature file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"{path}: empty feature file")
    header = parse_header(lines[0])
    if "descriptor_id" not in header or "dim" not in header:
        raise DataError(f"{path}: header must carry descriptor_id and dim")
    dim = int(header["dim"])
    ids, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split(",")
        values = _parse_row(parts[1:], path, lineno)
        if len(values) != dim:
            raise DataError(f"{path}: line {lineno}: expected {dim} values, got {len(values)}")
        ids.append(parts[0])
        rows.append(values)
    data = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    meta = {k: v for k, v in header.items() if k not in ("descriptor_id", "dim")}
    return FeatureMatrix(ids, data, header["descriptor_id"], meta)


class ScoreMatrix:
    """n_samples x n_classes classifier outputs for one ensemble member."""

    def __init__(self, ids, scores, member_id: str, class_names=None):
        scores = np.asarray(scores, dtype=np.float64)
        ids = [str(i) for i in ids]
        if scores.ndim != 2:
            raise DataError("score matrix must be two-dimensional")
        if scores.shape[0] != len(ids):
            raise DataError(f"{len(ids)} ids but {scores.shape[0]} score rows")
        bad = np.argwhere(~np.isfinite(scores))
        if len(bad):
            r, c = bad[0]
            raise DataError(f"member {member_id!r}: non-finite score at row {r + 1}, column {c}")
        self.ids = ids
        self.scores = scores
        self.member_id = member_id
        self.class_names = list(class_names) if class_names is not None else None

    @property
    def n_classes(self) -> int:
        return int(self.scores.shape[1])

    def predictions(self) -> np.ndarray:
        """Row-wise argmax; ``np.argmax`` already resolves ties to the lowest index."""
        if len(self.ids) == 0:
            return np.zeros(0, dtype=int)
        return np.argmax(self.scores, axis=1)

    def reordered(self, ids) -> "ScoreMatrix":
        """Return rows in the order of ``ids``; every id must be present."""
        index = {rid: i for i, rid in enumerate(self.ids)}
        missing = [rid for rid in ids if rid not in index]
        if missing:
            raise DataError(f"member {self.member_id!r} lacks ids {missing[:5]}")
        rows = [index[rid] for rid in ids]
        return ScoreMatrix(list(ids), self.scores[rows], self.member_id, self.class_names)

    def __len__(self):
        return len(self.ids)

    def __repr__(self):
        return f"ScoreMatrix({self.member_id!r}, n={len(self.ids)}, C={self.n_classes})"


def write_score_file(path, sm: ScoreMatrix, class_names=None) -> None:
    names = list(class_names or sm.class_names or [f"class_{c}" for c in range(sm.n_classes)])
    lines = [format_header({"member_id": sm.member_id}), ",".join(["id"] + names)]
    for rid, row in zip(sm.ids, sm.scores):
        lines.append(",".join([rid] + [fmt_float(v) for v in row]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_score_file(path) -> ScoreMatrix:
    """Read a score CSV. Class columns are returned in file order."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"score file not found: {path}")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    member_id = path.stem
    body = []
    for ln in lines:
        if ln.startswith("#"):
            member_id = parse_header(ln).get("member_id", member_id)
        else:
            body.append(ln)
    if not body:
        raise DataError(f"{path}: missing 'id,<classes>' header")
    head = [h.strip() for h in body[0].split(",")]
    if head[0] != "id" or len(head) < 3:
        raise DataError(f"{path}: header must be 'id,<class_0>,...' with at least 2 classes")
    names = head[1:]
    ids, rows = [], []
    for rowno, ln in enumerate(body[1:], start=1):
        parts = ln.split(",")
        if len(parts) != len(head):
            raise DataError(f"{path}: row {rowno}: expected {len(head)} fields, got {len(parts)}")
        try:
            values = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise DataError(f"{path}: row {rowno}: non-numeric value ({exc})") from None
        for col, v in enumerate(values):
            if not math.isfinite(v):
                raise DataError(f"{path}: row {rowno}, column {names[col]!r}: non-finite value {v}")
        ids.append(parts[0])
        rows.append(values)
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate ids")
    scores = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return ScoreMatrix(ids, scores, member_id, names)
