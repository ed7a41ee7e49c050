"""RBF support vector machines trained with SMO, one-vs-all wrapping and CV tuning."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError
from .formats import atomic_write_text, fmt_float, format_header, parse_header
from .metrics import balanced_accuracy, confusion

log = logging.getLogger(__name__)

KKT_TOL = 1e-3
MAX_ITER = 1_000_000
DEFAULT_C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA_EXPONENTS = tuple(range(-7, 4))
_TAU = 1e-12


@dataclass(frozen=True)
class KernelParams:
    C: float
    gamma: float

    def __post_init__(self):
        if not (self.C > 0 and self.gamma > 0):
            raise ValueError(f"C and gamma must be > 0, got C={self.C}, gamma={self.gamma}")


def default_gamma_grid(d: int) -> list[float]:
    return [2.0 ** e / max(d, 1) for e in DEFAULT_GAMMA_EXPONENTS]


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * cdist(A, B, "sqeuclidean"))


@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    iterations: int
    objective: list = field(default_factory=list)


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, tol: float = KKT_TOL,
              max_iter: int = MAX_ITER, debug: bool = False) -> SmoResult:
    """Solve the C-SVC dual for a precomputed kernel with maximal-violating-pair SMO.

    The dual is min 1/2 a^T Q a - e^T a with Q_ij = y_i y_j K_ij, 0 <= a <= C,
    y^T a = 0. Iteration stops once the violation m(a) - M(a) drops below
    ``tol``; the gradient is then recomputed from scratch and re-checked so
    the stopping test never relies on accumulated drift.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.diag(K).copy()
    pos = y > 0
    history = []

    def objective():
        return float(0.5 * alpha.sum() - 0.5 * np.dot(alpha, G))

    it = 0
    while True:
        if debug:
            history.append(objective())
        v = -y * G
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        vi = np.where(up, v, -np.inf)
        vj = np.where(low, v, np.inf)
        i = int(np.argmax(vi))
        j = int(np.argmin(vj))
        if vi[i] - vj[j] < tol:
            G = (y * (K @ (alpha * y))) - 1.0
            v = -y * G
            vi = np.where(up, v, -np.inf)
            vj = np.where(low, v, np.inf)
            i = int(np.argmax(vi))
            j = int(np.argmin(vj))
            if vi[i] - vj[j] < tol:
                break
        if it >= max_iter:
            log.warning("SMO stopped at max_iter=%d with violation %.3g", max_iter, vi[i] - vj[j])
            break
        it += 1

        yi, yj = y[i], y[j]
        Kij = K[i, j]
        ai_old, aj_old = alpha[i], alpha[j]
        # two-variable update with clipping to the box, as in LIBSVM;
        # the curvature K_ii + K_jj - 2 K_ij is the same for both label cases
        quad = max(diag[i] + diag[j] - 2.0 * Kij, _TAU)
        if yi != yj:
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        dai, daj = ai - ai_old, aj - aj_old
        G += y * (yi * dai * K[:, i] + yj * daj * K[:, j])

    v = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(v[free].mean())
    else:
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        hi = v[up].max() if up.any() else v[low].min()
        lo = v[low].min() if low.any() else hi
        bias = float((hi + lo) / 2)
    if debug:
        history.append(objective())
    return SmoResult(alpha, bias, it, history)


@dataclass
class BinarySvm:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    params: KernelParams
    iterations: int = 0
    objective: list = field(default_factory=list, repr=False)

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise DataError(f"input dim {X.shape[1]} != model dim {self.dim}")
        if len(self.dual_coef) == 0:
            return np.full(X.shape[0], self.bias)
        return rbf_kernel(X, self.support_vectors, self.params.gamma) @ self.dual_coef + self.bias


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"X must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature values")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(y) != X.shape[0]:
        raise DataError(f"{X.shape[0]} samples but {len(y)} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("binary labels must be -1 or +1")
    if len(y) < 2 or not ((y > 0).any() and (y < 0).any()):
        raise DataError("binary training needs both classes present")
    return X, y


def _machine_from(X, y, res, p):
    sv = res.alpha > 0
    return BinarySvm(X[sv].copy(), (res.alpha * y)[sv], res.bias, p, res.iterations, res.objective)


def canonical_order(X, y) -> np.ndarray:
    """Lexicographic order of (feature row, label).

    SMO breaks ties in working-set selection by index, so solving in this
    order makes training independent of how the samples were shuffled.
    """
    X = np.asarray(X)
    return np.lexsort((np.asarray(y),) + tuple(X.T[::-1]))


def train_binary(X, y, p: KernelParams, tol: float = KKT_TOL, max_iter: int = MAX_ITER,
                 debug: bool = False) -> BinarySvm:
    X, y = _check_xy(X, y)
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    K = rbf_kernel(X, X, p.gamma)
    return _machine_from(X, y, smo_solve(K, y, p.C, tol, max_iter, debug), p)


def decision_value(m: BinarySvm, x) -> float:
    """sum_i alpha_i y_i K(x_i, x) + b for a single vector."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != m.dim:
        raise DataError(f"input dim {x.size} != model dim {m.dim}")
    return float(m.decision_function(x[None, :])[0])


def kkt_residuals(m: BinarySvm, X, y, alpha) -> np.ndarray:
    """Per-sample KKT violation of a trained machine on its training set."""
    f = m.decision_function(X)
    margin = np.asarray(y) * f
    C = m.params.C
    alpha = np.asarray(alpha)
    res = np.where(alpha <= 0, np.maximum(0.0, 1.0 - margin),
                   np.where(alpha >= C, np.maximum(0.0, margin - 1.0), np.abs(margin - 1.0)))
    return res


def fit_standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and population std; zero-variance dims keep scale 1."""
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 1.0)
    return mean, scale


@dataclass
class OvaSvm:
    machines: list[BinarySvm]
    class_names: list[str]
    mean: np.ndarray
    scale: np.ndarray
    params: KernelParams

    @property
    def n_classes(self) -> int:
        return len(self.machines)

    @property
    def dim(self) -> int:
        return len(self.mean)

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


def _class_list(labels, class_names):
    labels = np.asarray(labels).astype(int)
    if class_names is None:
        class_names = [str(c) for c in range(int(labels.max()) + 1)] if len(labels) else []
    n_classes = len(class_names)
    if n_classes < 2:
        raise DataError("one-vs-all training needs at least 2 classes")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise DataError(f"labels must lie in 0..{n_classes - 1}")
    counts = np.bincount(labels, minlength=n_classes)
    for c, n in enumerate(counts):
        if n == 0:
            raise DataError(f"class {class_names[c]!r} has no training samples")
    return labels, list(class_names)


def _fit_machines(Xs, K, labels, n_classes, p, tol, max_iter):
    machines = []
    for c in range(n_classes):
        y = np.where(labels == c, 1.0, -1.0)
        machines.append(_machine_from(Xs, y, smo_solve(K, y, p.C, tol, max_iter), p))
    return machines


def train_ova(X, labels, p: KernelParams, class_names=None, tol: float = KKT_TOL,
              max_iter: int = MAX_ITER) -> OvaSvm:
    """Train one class-vs-rest machine per class on internally standardised features."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise DataError("features must be a finite 2-D array")
    labels, class_names = _class_list(labels, class_names)
    if len(labels) != X.shape[0]:
        raise DataError(f"{X.shape[0]} samples but {len(labels)} labels")
    order = canonical_order(X, labels)
    X, labels = X[order], labels[order]
    mean, scale = fit_standardizer(X)
    Xs = (X - mean) / scale
    K = rbf_kernel(Xs, Xs, p.gamma)
    machines = _fit_machines(Xs, K, labels, len(class_names), p, tol, max_iter)
    return OvaSvm(machines, class_names, mean, scale, p)


def score_matrix(m: OvaSvm, X) -> np.ndarray:
    """n x C raw one-vs-all decision values."""
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return np.zeros((0, m.n_classes))
    X = np.atleast_2d(X)
    if X.shape[1] != m.dim:
        raise DataError(f"input dim {X.shape[1]} != model dim {m.dim}")
    Xs = m.standardize(X)
    return np.column_stack([mc.decision_function(Xs) for mc in m.machines])


def predict(m: OvaSvm, X) -> np.ndarray:
    s = score_matrix(m, X)
    return np.argmax(s, axis=1) if len(s) else np.zeros(0, dtype=int)


def stratified_folds(labels, folds: int, seed: int) -> np.ndarray:
    """Fold index per sample: each class is shuffled, then dealt round-robin."""
    labels = np.asarray(labels).astype(int)
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    rng = np.random.default_rng(seed)
    assign = np.empty(len(labels), dtype=int)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < folds:
            raise DataError(f"class {c} has {len(idx)} samples, fewer than {folds} folds")
        assign[rng.permutation(idx)] = np.arange(len(idx)) % folds
    return assign


def tune(X, labels, C_grid, gamma_grid, folds: int = 5, seed: int = 0, class_names=None,
         tol: float = KKT_TOL, return_table: bool = False):
    """Grid search by stratified k-fold mean validation balanced accuracy.

    Ties go to the smaller C, then the smaller gamma. Samples are put in
    canonical order first, so folds do not depend on the input row order.
    """
    X = np.asarray(X, dtype=np.float64)
    labels, class_names = _class_list(labels, class_names)
    if len(labels) != X.shape[0]:
        raise DataError(f"{X.shape[0]} samples but {len(labels)} labels")
    order = canonical_order(X, labels)
    X, labels = X[order], labels[order]
    n_classes = len(class_names)
    C_grid = sorted(float(c) for c in C_grid)
    gamma_grid = sorted(float(g) for g in gamma_grid)
    if not C_grid or not gamma_grid:
        raise ValueError("empty hyperparameter grid")
    assign = stratified_folds(labels, folds, seed)
    totals = np.zeros((len(C_grid), len(gamma_grid)))
    for f in range(folds):
        tr, va = assign != f, assign == f
        mean, scale = fit_standardizer(X[tr])
        Xtr, Xva = (X[tr] - mean) / scale, (X[va] - mean) / scale
        d_tr = cdist(Xtr, Xtr, "sqeuclidean")
        for gi, gamma in enumerate(gamma_grid):
            K = np.exp(-gamma * d_tr)
            for ci, C in enumerate(C_grid):
                p = KernelParams(C, gamma)
                machines = _fit_machines(Xtr, K, labels[tr], n_classes, p, tol, MAX_ITER)
                scores = np.column_stack([mc.decision_function(Xva) for mc in machines])
                pred = np.argmax(scores, axis=1)
                totals[ci, gi] += balanced_accuracy(confusion(labels[va], pred, n_classes))
    means = totals / folds
    best, best_val = (0, 0), -np.inf
    for ci in range(len(C_grid)):
        for gi in range(len(gamma_grid)):
            if means[ci, gi] > best_val:
                best, best_val = (ci, gi), means[ci, gi]
    chosen = KernelParams(C_grid[best[0]], gamma_grid[best[1]])
    if return_table:
        return chosen, means
    return chosen


def save_ova(path, m: OvaSvm) -> None:
    """Write the model as a self-describing CSV bundle."""
    lines = [
        format_header({"ova_svm": "", "n_classes": m.n_classes, "dim": m.dim,
                       "C": fmt_float(m.params.C), "gamma": fmt_float(m.params.gamma)}),
        ",".join(["classes"] + m.class_names),
        ",".join(["mean"] + [fmt_float(v) for v in m.mean]),
        ",".join(["scale"] + [fmt_float(v) for v in m.scale]),
    ]
    for c, mc in enumerate(m.machines):
        lines.append(f"machine,{c},bias,{fmt_float(mc.bias)},n_sv,{len(mc.dual_coef)}")
        for coef, sv in zip(mc.dual_coef, mc.support_vectors):
            lines.append(",".join(["sv", fmt_float(coef)] + [fmt_float(v) for v in sv]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_ova(path) -> OvaSvm:
    path = Path(path)
    if not path.exists():
        raise DataError(f"model bundle not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    try:
        head = parse_header(lines[0])
        if "ova_svm" not in head:
            raise DataError(f"{path}: not an ova_svm bundle")
        params = KernelParams(float(head["C"]), float(head["gamma"]))
        dim = int(head["dim"])
        class_names = lines[1].split(",")[1:]
        mean = np.array([float(v) for v in lines[2].split(",")[1:]])
        scale = np.array([float(v) for v in lines[3].split(",")[1:]])
        machines = []
        k = 4
        while k < len(lines):
            parts = lines[k].split(",")
            bias, n_sv = float(parts[3]), int(parts[5])
            rows = [[float(v) for v in lines[k + 1 + s].split(",")[1:]] for s in range(n_sv)]
            arr = np.array(rows).reshape(n_sv, dim + 1)
            machines.append(BinarySvm(arr[:, 1:].copy(), arr[:, 0].copy(), bias, params))
            k += 1 + n_sv
    except (IndexError, ValueError, KeyError) as exc:
        raise DataError(f"{path}: malformed model bundle ({exc})") from None
    return OvaSvm(machines, class_names, mean, scale, params)
