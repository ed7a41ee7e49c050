from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Fixed-length descriptor output for one image."""

    descriptor_id: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.descriptor_id}: non-finite descriptor values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.dim

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.descriptor_id == other.descriptor_id and np.array_equal(self.values, other.values)


def l1_normalize(hist) -> np.ndarray:
    """Divide a histogram by its mass; an empty histogram stays all-zero."""
    hist = np.asarray(hist, dtype=np.float64)
    total = hist.sum()
    return hist / total if total > 0 else hist
