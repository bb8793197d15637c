"""RBF-kernel support vector machine trained by sequential minimal optimization.

The solver works on the dual problem

    max  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t. 0 <= a_i <= C,  sum_i a_i y_i = 0

choosing at every step the maximal violating pair with second-order
information for the partner, and stops once the KKT gap drops below
``tol``. Features are z-scored on the training set before the kernel is
applied.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InsufficientData, SingleClass

__all__ = [
    "Sample", "KernelParams", "SvmModel", "EvalMetrics", "rbf_kernel",
    "kernel_matrix", "train_svm", "decision_value", "decision_values",
    "harmonic_mean", "stratified_folds", "cross_validate", "grid_search",
    "GridSearchResult", "DEFAULT_GRID", "save_model", "load_model",
    "ConvergenceWarning",
]

MODEL_FORMAT = "mammoseg-svm-v1"
DEFAULT_GRID = tuple(10.0 ** k for k in range(-3, 4))
_TAU = 1e-12


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int

    def __post_init__(self):
        if self.label not in (1, -1):
            raise ValueError("label must be +1 (mass) or -1 (normal)")
        x = np.asarray(self.features, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", x)


@dataclass(frozen=True)
class KernelParams:
    C: float
    sigma: float

    def __post_init__(self):
        if not (self.C > 0 and self.sigma > 0):
            raise ValueError("C and sigma must be positive")


@dataclass
class SvmModel:
    support_vectors: np.ndarray   # standardized, shape (k, d)
    alphas: np.ndarray
    labels: np.ndarray
    bias: float
    params: KernelParams
    mean: np.ndarray
    scale: np.ndarray
    converged: bool = True
    n_iter: int = 0
    objective_trace: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_support(self) -> int:
        return len(self.alphas)


@dataclass(frozen=True)
class EvalMetrics:
    sensitivity: float
    specificity: float
    harmonic_mean: float
    undefined: bool = False


def rbf_kernel(x, y, p: KernelParams) -> float:
    """``exp(-||x - y||**2 / (2 sigma**2))``."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return math.exp(-float(d @ d) / (2.0 * p.sigma ** 2))


def kernel_matrix(A: np.ndarray, B: np.ndarray, sigma: float) -> np.ndarray:
    """Pairwise RBF kernel between the rows of ``A`` and ``B``."""
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * sigma ** 2))


def _as_arrays(data, y=None) -> Tuple[np.ndarray, np.ndarray]:
    if y is None:
        X = np.array([s.features for s in data], dtype=np.float64)
        y = np.array([s.label for s in data], dtype=np.int64)
    else:
        X = np.asarray(data, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("features must be a 2-D array with one row per label")
    if not np.isin(y, (-1, 1)).all():
        raise ValueError("labels must be +1 or -1")
    return X, y


def _smo(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int, record: bool):
    n = len(y)
    yf = y.astype(np.float64)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a
    diagK = np.diag(K).copy()
    trace = [0.0] if record else None
    converged = False
    it = 0
    while it < max_iter:
        # I_up: can move y_t * a_t up; I_low: can move it down
        up = ((yf > 0) & (alpha < C)) | ((yf < 0) & (alpha > 0))
        low = ((yf > 0) & (alpha > 0)) | ((yf < 0) & (alpha < C))
        score = -yf * grad
        s_up = np.where(up, score, -np.inf)
        i = int(np.argmax(s_up))
        m_val = s_up[i]
        s_low = np.where(low, score, np.inf)
        if m_val - s_low.min() <= tol:
            converged = True
            break
        # second-order choice of the partner among violating low candidates
        b = m_val - score
        cand = low & (b > 0)
        quad = diagK[i] + diagK - 2.0 * K[i]
        quad = np.where(quad > 0, quad, _TAU)
        gain = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(gain))
        it += 1

        ai, aj = alpha[i], alpha[j]
        Qij = yf[i] * yf[j] * K[i, j]
        if y[i] != y[j]:
            q = max(K[i, i] + K[j, j] + 2.0 * Qij, _TAU)
            delta = (-grad[i] - grad[j]) / q
            diff = ai - aj
            ai += delta
            aj += delta
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
            q = max(K[i, i] + K[j, j] - 2.0 * Qij, _TAU)
            delta = (grad[i] - grad[j]) / q
            total = ai + aj
            ai -= delta
            aj += delta
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
        di, dj = ai - alpha[i], aj - alpha[j]
        alpha[i], alpha[j] = ai, aj
        grad += yf * (K[:, i] * (yf[i] * di) + K[:, j] * (yf[j] * dj))
        if record:
            # sum(a) - 1/2 a'Qa, using grad = Qa - e
            trace.append(float(-0.5 * alpha @ (grad - 1.0)))

    # bias from free vectors, else the midpoint of the feasible interval
    score = -yf * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = -float(score[free].mean())
    else:
        up = ((yf > 0) & (alpha < C)) | ((yf < 0) & (alpha > 0))
        low = ((yf > 0) & (alpha > 0)) | ((yf < 0) & (alpha < C))
        hi = score[up].max() if up.any() else score.max()
        lo = score[low].min() if low.any() else score.min()
        rho = -0.5 * float(hi + lo)
    return alpha, -rho, converged, it, (np.array(trace) if record else None)


def train_svm(data, y=None, params: KernelParams = None, *, tol: float = 1e-3,
              max_iter: Optional[int] = None, standardize: bool = True,
              record_objective: bool = False) -> SvmModel:
    """Fit a soft-margin RBF SVM.

    ``data`` is either a sequence of :class:`Sample` (``y`` omitted) or a
    feature matrix with ``y`` the matching +1/-1 labels. The iteration
    budget defaults to ``10 * n`` sweeps of ``n`` pair updates; when it runs
    out the current solution is returned with ``converged=False`` and a
    :class:`ConvergenceWarning`.
    """
    if params is None:
        if isinstance(y, KernelParams):
            y, params = None, y
        else:
            raise TypeError("kernel parameters are required")
    X, y = _as_arrays(data, y)
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise SingleClass("training needs samples of both classes")
    n, d = X.shape
    if standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        mean, scale = np.zeros(d), np.ones(d)
    Z = (X - mean) / scale
    K = kernel_matrix(Z, Z, params.sigma)
    budget = max_iter if max_iter is not None else 10 * n * n
    alpha, bias, converged, it, trace = _smo(K, y, params.C, tol, budget, record_objective)
    if not converged:
        warnings.warn(f"SMO stopped after {it} iterations without reaching tol={tol}", ConvergenceWarning)
    sv = alpha > 0
    return SvmModel(
        support_vectors=Z[sv], alphas=alpha[sv], labels=y[sv], bias=bias, params=params,
        mean=mean, scale=scale, converged=converged, n_iter=it, objective_trace=trace,
    )


def decision_values(model: SvmModel, X) -> np.ndarray:
    """Decision function for each row of ``X`` (raw, unstandardized features)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Z = (X - model.mean) / model.scale
    if model.n_support == 0:
        return np.full(len(Z), model.bias)
    K = kernel_matrix(Z, model.support_vectors, model.params.sigma)
    return K @ (model.alphas * model.labels) + model.bias


def decision_value(model: SvmModel, x) -> float:
    return float(decision_values(model, x)[0])


def harmonic_mean(sens: float, spec: float) -> float:
    """``2 * sens * spec / (sens + spec)``, defined as 0 when both are 0."""
    if sens + spec == 0:
        return 0.0
    return 2.0 * sens * spec / (sens + spec)


# --------------------------------------------------------------------------
# model selection

def stratified_folds(y, n_folds: int = 10, seed: int = 0) -> np.ndarray:
    """Fold index per sample; each class is shuffled and dealt round-robin.

    The fold count shrinks to the size of the smaller class when needed.
    """
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2 or counts.min() < 2:
        raise InsufficientData("cross-validation needs at least 2 samples of each class")
    k = int(min(n_folds, counts.min()))
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.int64)
    for c in classes:
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = np.arange(len(idx)) % k
    return folds


def _rates(pred: np.ndarray, y: np.ndarray) -> EvalMetrics:
    pos, neg = y > 0, y < 0
    sens = float((pred[pos] > 0).mean()) if pos.any() else float("nan")
    spec = float((pred[neg] <= 0).mean()) if neg.any() else float("nan")
    undefined = math.isnan(sens) or math.isnan(spec)
    hm = float("nan") if undefined else harmonic_mean(sens, spec)
    return EvalMetrics(sens, spec, hm, undefined)


def cross_validate(X, y, params: KernelParams, folds: np.ndarray, **fit_kw) -> List[EvalMetrics]:
    """Per-fold test-set metrics for one parameter pair."""
    X, y = _as_arrays(X, y)
    out = []
    for f in np.unique(folds):
        test = folds == f
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model = train_svm(X[~test], y[~test], params, **fit_kw)
        out.append(_rates(decision_values(model, X[test]), y[test]))
    return out


@dataclass
class GridSearchResult:
    params: KernelParams
    metrics: EvalMetrics
    seed: int
    folds: np.ndarray
    table: dict            # (C, sigma) -> list of per-fold EvalMetrics

    def mean_hm(self, C: float, sigma: float) -> float:
        return float(np.mean([m.harmonic_mean for m in self.table[(C, sigma)]]))


def grid_search(data, y=None, *, grid: Sequence[float] = DEFAULT_GRID, n_folds: int = 10,
                seed: int = 0, folds: Optional[np.ndarray] = None, **fit_kw) -> GridSearchResult:
    """Pick ``(C, sigma)`` maximizing the mean per-fold harmonic mean.

    Every pair of the ``grid x grid`` lattice is scored by stratified
    ``n_folds``-fold cross-validation with folds drawn from ``seed`` (or
    given explicitly via ``folds``). Ties prefer the smaller C, then the
    smaller sigma.
    """
    X, y = _as_arrays(data, y)
    if len(np.unique(y)) < 2:
        raise InsufficientData("grid search needs samples of both classes")
    if folds is None:
        folds = stratified_folds(y, n_folds, seed)
    folds = np.asarray(folds)
    table = {}
    best, best_score = None, -np.inf
    for C in sorted(grid):
        for sigma in sorted(grid):
            per_fold = cross_validate(X, y, KernelParams(C, sigma), folds, **fit_kw)
            table[(C, sigma)] = per_fold
            score = float(np.mean([m.harmonic_mean for m in per_fold]))
            if score > best_score:
                best, best_score = (C, sigma), score
    per_fold = table[best]
    metrics = EvalMetrics(
        float(np.mean([m.sensitivity for m in per_fold])),
        float(np.mean([m.specificity for m in per_fold])),
        best_score,
    )
    return GridSearchResult(KernelParams(*best), metrics, seed, folds, table)


# --------------------------------------------------------------------------
# model file

def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_model(model: SvmModel, path) -> None:
    """Plain-text model: tagged header, then ``alpha label f1..fd`` per support vector.

    Support vectors are written in standardized units.
    """
    lines = [
        f"format {MODEL_FORMAT}",
        f"C {model.params.C!r}",
        f"sigma {model.params.sigma!r}",
        f"bias {float(model.bias)!r}",
        f"mean {_fmt(model.mean)}",
        f"scale {_fmt(model.scale)}",
        f"n_support {model.n_support}",
    ]
    for a, lab, sv in zip(model.alphas, model.labels, model.support_vectors):
        lines.append(f"{float(a)!r} {int(lab)} {_fmt(sv)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> SvmModel:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = {}
    for ln in lines[:7]:
        key, _, rest = ln.partition(" ")
        header[key] = rest
    if header.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} model file")
    k = int(header["n_support"])
    rows = [ln.split() for ln in lines[7:7 + k]]
    if len(rows) != k:
        raise ValueError("model file is truncated")
    mean = np.array(header["mean"].split(), dtype=np.float64)
    return SvmModel(
        support_vectors=np.array([r[2:] for r in rows], dtype=np.float64).reshape(k, len(mean)),
        alphas=np.array([r[0] for r in rows], dtype=np.float64),
        labels=np.array([r[1] for r in rows], dtype=np.int64),
        bias=float(header["bias"]),
        params=KernelParams(float(header["C"]), float(header["sigma"])),
        mean=mean,
        scale=np.array(header["scale"].split(), dtype=np.float64),
    )
