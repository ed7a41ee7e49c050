"""Z-normalisation of member scores, discarding near-chance members and sum-rule fusion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .formats import ScoreMatrix

CHANCE_BACC = 0.5
DEFAULT_MARGIN = 0.05
MODES = ("global", "per_column")


@dataclass(frozen=True, eq=False)
class NormStats:
    mode: str
    means: np.ndarray
    stds: np.ndarray
    passthrough: np.ndarray  # True where std is zero: only centre, do not scale
    # low-order part of the mean (mean = means + mean_residuals exactly enough that
    # centring stays accurate when the spread is tiny compared with the magnitude)
    mean_residuals: np.ndarray | None = None

    def centre(self, cols: np.ndarray) -> np.ndarray:
        out = cols - self.means
        if self.mean_residuals is not None:
            out = out - self.mean_residuals
        return out


def _scores(x):
    return x.scores if isinstance(x, ScoreMatrix) else np.asarray(x, dtype=np.float64)


def znorm_fit(reference, mode: str = "global") -> NormStats:
    """Mean and sample (n-1) standard deviation over the whole matrix or per column."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    s = _scores(reference)
    if s.size == 0:
        raise DataError("cannot fit normalisation on an empty score matrix")
    cols = s.reshape(-1, 1) if mode == "global" else s
    means = cols.mean(axis=0)
    residuals = (cols - means).mean(axis=0)
    centred = cols - means - residuals
    if cols.shape[0] >= 2:
        stds = np.sqrt((centred * centred).sum(axis=0) / (cols.shape[0] - 1))
    else:
        stds = np.zeros(cols.shape[1])
    passthrough = stds <= 1e-12 * np.maximum(1.0, np.abs(means))
    stds = np.where(passthrough, 0.0, stds)
    return NormStats(mode, means, stds, passthrough, residuals)


def znorm_apply(stats: NormStats, x) -> ScoreMatrix | np.ndarray:
    s = _scores(x)
    if s.ndim != 2 or (stats.mode == "per_column" and s.shape[1] != len(stats.means)):
        raise DataError(f"score shape {s.shape} incompatible with {stats.mode} stats of width {len(stats.means)}")
    scale = np.where(stats.passthrough, 1.0, stats.stds)
    out = stats.centre(s) / scale
    if isinstance(x, ScoreMatrix):
        return ScoreMatrix(x.ids, out, x.member_id, x.class_names)
    return out


@dataclass
class EnsembleMember:
    member_id: str
    train_scores: ScoreMatrix
    eval_scores: dict = field(default_factory=dict)  # split name -> ScoreMatrix
    train_bacc: float = 0.0

    def __post_init__(self):
        for split, sm in self.eval_scores.items():
            if sm.n_classes != self.train_scores.n_classes:
                raise DataError(f"member {self.member_id!r}: {split} scores have {sm.n_classes} "
                                f"classes, train has {self.train_scores.n_classes}")


def is_random(member: EnsembleMember, chance_margin: float = DEFAULT_MARGIN) -> bool:
    return member.train_bacc < CHANCE_BACC + chance_margin


def filter_members(members, chance_margin: float = DEFAULT_MARGIN) -> list[EnsembleMember]:
    """Keep members whose training bAcc reaches chance + margin, in their original order."""
    if chance_margin < 0:
        raise ValueError("chance_margin must be >= 0")
    kept = [m for m in members if not is_random(m, chance_margin)]
    if not kept:
        raise DataError("empty ensemble: every member scored at chance level on the training set")
    return kept


def sum_rule(members) -> ScoreMatrix:
    """Entry-wise sum of aligned member score matrices.

    Each entry is summed in sorted order of its addends, so the result does
    not depend on member order.
    """
    members = list(members)
    if not members:
        raise DataError("sum rule needs at least one member")
    first = members[0]
    for m in members[1:]:
        if m.n_classes != first.n_classes:
            raise DataError(f"member {m.member_id!r} has {m.n_classes} classes, expected {first.n_classes}")
        if m.ids != first.ids:
            raise DataError(f"member {m.member_id!r} rows are not aligned with {first.member_id!r}")
    if len(members) == 1:
        fused = first.scores.copy()
    else:
        stack = np.sort(np.stack([m.scores for m in members]), axis=0)
        fused = stack[0].copy()
        for layer in stack[1:]:
            fused += layer
    return ScoreMatrix(first.ids, fused, "fusion", first.class_names)
