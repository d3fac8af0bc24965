"""Multi-class metrics, one-vs-rest AUC, stratified k-fold CV and model comparison."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata
from sklearn.base import clone

from .exceptions import ConfigError, FoldError, InputError, NoAUCError


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts indexed ``[true class, predicted class]``."""

    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


def confusion_matrix(truth, predicted, n_classes: int) -> ConfusionMatrix:
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    if truth.ndim != 1 or truth.shape != predicted.shape:
        raise InputError("truth and predicted must be 1-D sequences of equal length")
    if truth.size == 0:
        raise InputError("cannot build a confusion matrix from empty sequences")
    for name, seq in (("truth", truth), ("predicted", predicted)):
        if seq.dtype.kind not in "iu":
            raise InputError(f"{name} must hold integer class codes")
        if seq.min() < 0 or seq.max() >= n_classes:
            raise InputError(f"{name} holds a class code outside 0..{n_classes - 1}")
    flat = np.bincount(truth * n_classes + predicted, minlength=n_classes * n_classes)
    return ConfusionMatrix(flat.reshape(n_classes, n_classes).astype(np.int64))


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


@dataclass(frozen=True, eq=False)
class ClassMetrics:
    """Per-class precision/recall/F1/AUC with macro summaries.

    Macro averages run over classes with non-zero support. ``roc_auc``
    entries are NaN where the AUC is undefined (or was not computed).
    """

    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    roc_auc: np.ndarray = None

    def __post_init__(self):
        if self.roc_auc is None:
            object.__setattr__(self, "roc_auc", np.full(self.precision.shape, np.nan))

    @property
    def _mask(self):
        return self.support > 0

    @property
    def macro_precision(self) -> float:
        return float(self.precision[self._mask].mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall[self._mask].mean())

    @property
    def macro_f1(self) -> float:
        return float(self.f1[self._mask].mean())

    @property
    def macro_auc(self) -> float:
        vals = self.roc_auc[~np.isnan(self.roc_auc)]
        return float(vals.mean()) if vals.size else math.nan

    def summary(self) -> dict:
        return {
            "precision": self.macro_precision,
            "recall": self.macro_recall,
            "f1": self.macro_f1,
            "roc_auc": self.macro_auc,
            "accuracy": self.accuracy,
        }


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (0 when both are 0)."""
    return 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def class_metrics(cm: ConfusionMatrix, roc_auc=None) -> ClassMetrics:
    counts = cm.counts
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    accuracy = float(tp.sum() / counts.sum()) if counts.sum() else 0.0
    auc = None if roc_auc is None else np.asarray(roc_auc, dtype=np.float64)
    return ClassMetrics(precision, recall, f1, counts.sum(axis=1), accuracy, auc)


def binary_auc(scores, positive) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 * P(tie). NaN if undefined."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = rankdata(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_ovr(scores, truth) -> tuple[np.ndarray, float]:
    """One-vs-rest AUC per class and its macro mean over defined classes.

    Raises :class:`NoAUCError` if no class has both positives and negatives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if scores.ndim != 2 or scores.shape[0] != truth.shape[0]:
        raise InputError("scores must be (n_records, n_classes) aligned with truth")
    per_class = np.array(
        [binary_auc(scores[:, c], truth == c) for c in range(scores.shape[1])]
    )
    defined = per_class[~np.isnan(per_class)]
    if defined.size == 0:
        raise NoAUCError("AUC undefined for every class (need positives and negatives)")
    return per_class, float(defined.mean())


@dataclass(frozen=True)
class CvConfig:
    k: int = 10
    seed: int = 0
    stratified: bool = True


def stratified_k_fold(labels, k: int, seed: int = 0) -> list[np.ndarray]:
    """Partition record indices into ``k`` test folds, balanced per class.

    Each class is shuffled and dealt round-robin, continuing from where the
    previous class stopped, so per-class fold counts differ by at most one
    and fold sizes differ by at most one.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    _check_k(k, n)
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < k):
        warnings.warn(
            f"{int(np.sum(counts < k))} class(es) have fewer than k={k} members", stacklevel=2
        )
    folds = [[] for _ in range(k)]
    offset = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        for j, i in enumerate(members):
            folds[(offset + j) % k].append(i)
        offset = (offset + members.size) % k
    return [np.sort(np.array(f, dtype=np.intp)) for f in folds]


def k_fold(n_records: int, k: int, seed: int = 0) -> list[np.ndarray]:
    _check_k(k, n_records)
    order = np.random.default_rng(seed).permutation(n_records)
    return [np.sort(order[j::k]) for j in range(k)]


def _check_k(k, n):
    if k < 2:
        raise ConfigError(f"k={k}: need at least 2 folds")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of records ({n})")


def fold_splits(labels, cv: CvConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    labels = np.asarray(labels)
    n = labels.shape[0]
    if cv.stratified:
        tests = stratified_k_fold(labels, cv.k, cv.seed)
    else:
        tests = k_fold(n, cv.k, cv.seed)
    splits = []
    for test in tests:
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        splits.append((np.flatnonzero(mask), test))
    return splits


@dataclass(frozen=True, eq=False)
class FoldResult:
    index: int
    metrics: ClassMetrics
    confusion: ConfusionMatrix
    fit_seconds: float = 0.0
    predict_seconds: float = 0.0


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    folds: tuple[FoldResult, ...]
    confusion: ConfusionMatrix
    config: CvConfig
    model: str = ""
    params: dict = field(default_factory=dict)

    @property
    def mean(self) -> dict:
        """Arithmetic mean over folds of each macro metric (NaN AUC folds skipped)."""
        rows = [f.metrics.summary() for f in self.folds]
        out = {}
        for key in rows[0]:
            vals = np.array([r[key] for r in rows], dtype=np.float64)
            vals = vals[~np.isnan(vals)]
            out[key] = float(vals.mean()) if vals.size else math.nan
        return out

    def per_class_mean(self) -> dict[str, np.ndarray]:
        """Per-class fold means; a fold counts for class c only if c occurs in it."""
        out = {}
        present = np.stack([f.metrics.support > 0 for f in self.folds])
        for key in ("precision", "recall", "f1", "roc_auc"):
            vals = np.stack([getattr(f.metrics, key) for f in self.folds]).astype(np.float64)
            vals = np.where(present & ~np.isnan(vals), vals, np.nan)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                out[key] = np.nanmean(vals, axis=0)
        out["support"] = self.confusion.support
        return out

    @property
    def timings(self) -> list[dict]:
        return [
            {"fold": f.index, "fit_seconds": f.fit_seconds, "predict_seconds": f.predict_seconds}
            for f in self.folds
        ]

    def to_dict(self, labels: Sequence[str] | None = None, include_timings: bool = False) -> dict:
        labels = list(labels) if labels is not None else [str(c) for c in range(self.confusion.n_classes)]

        def fold_dict(f: FoldResult):
            m = f.metrics
            return {
                "fold": f.index,
                "n_test": int(m.support.sum()),
                "macro": _clean(m.summary()),
                "per_class": {
                    lab: _clean({
                        "precision": m.precision[c], "recall": m.recall[c], "f1": m.f1[c],
                        "roc_auc": m.roc_auc[c], "support": int(m.support[c]),
                    })
                    for c, lab in enumerate(labels)
                },
            }

        out = {
            "model": self.model,
            "params": self.params,
            "config": {"k": self.config.k, "seed": self.config.seed, "stratified": self.config.stratified},
            "labels": labels,
            "folds": [fold_dict(f) for f in self.folds],
            "mean": _clean(self.mean),
            "confusion": self.confusion.counts.tolist(),
        }
        if include_timings:
            out["timings"] = self.timings
        return out

    def per_class_csv(self, labels: Sequence[str]) -> str:
        pc = self.per_class_mean()
        lines = ["app,precision,recall,f1,roc"]
        for c, lab in enumerate(labels):
            cells = [_fmt(pc[key][c]) for key in ("precision", "recall", "f1", "roc_auc")]
            lines.append(",".join([_csv_cell(lab)] + cells))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) or (
        isinstance(v, np.floating) and np.isnan(v)) else f"{float(v):.6f}"


def _csv_cell(s: str) -> str:
    return f'"{s}"' if any(ch in s for ch in ',"\n') else s


def _clean(d: dict) -> dict:
    """JSON-safe copy: numpy scalars to Python, NaN to None."""
    out = {}
    for k, v in d.items():
        v = float(v) if isinstance(v, (float, np.floating)) else v
        out[k] = None if isinstance(v, float) and math.isnan(v) else v
    return out


def _make_model(model_factory, encoded):
    if hasattr(model_factory, "fit"):
        return clone(model_factory)
    return model_factory(encoded)


def evaluate_fold(model, encoded, train, test, index: int = 0) -> FoldResult:
    n_classes = encoded.n_classes
    start = time.perf_counter()
    model.fit(encoded.X[train], encoded.y[train])
    fit_seconds = time.perf_counter() - start
    start = time.perf_counter()
    scores = model.predict_proba(encoded.X[test]) if hasattr(model, "predict_proba") else None
    predicted = np.asarray(model.predict(encoded.X[test]), dtype=np.int64)
    predict_seconds = time.perf_counter() - start
    truth = encoded.y[test]
    cm = confusion_matrix(truth, predicted, n_classes)
    auc = None
    if scores is not None:
        try:
            auc, _ = roc_auc_ovr(scores, truth)
        except NoAUCError:
            auc = None
    return FoldResult(index, class_metrics(cm, auc), cm, fit_seconds, predict_seconds)


def cross_validate(model_factory, encoded, cv: CvConfig = CvConfig(), n_jobs=None,
                   name: str = "", params: dict | None = None) -> EvaluationReport:
    """Train a fresh model per fold and score it on the held-out fold.

    ``model_factory`` is either an unfitted estimator (cloned per fold) or a
    callable ``factory(encoded) -> estimator``. Training errors are re-raised
    as :class:`FoldError` carrying the fold index.
    """
    splits = fold_splits(encoded.y, cv)

    def run(i, train, test):
        try:
            return evaluate_fold(_make_model(model_factory, encoded), encoded, train, test, i)
        except Exception as exc:
            raise FoldError(i, exc) from exc

    if n_jobs in (None, 1):
        folds = [run(i, tr, te) for i, (tr, te) in enumerate(splits)]
    else:
        from joblib import Parallel, delayed

        folds = Parallel(n_jobs=n_jobs)(delayed(run)(i, tr, te) for i, (tr, te) in enumerate(splits))
    pooled = folds[0].confusion
    for f in folds[1:]:
        pooled = pooled + f.confusion
    return EvaluationReport(tuple(folds), pooled, cv, name, dict(params or {}))


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    precision: float
    recall: float
    f1: float
    roc_auc: float


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]

    def to_csv(self) -> str:
        lines = ["model,precision,recall,f1,roc"]
        for r in self.rows:
            lines.append(f"{r.model},{_fmt(r.precision)},{_fmt(r.recall)},{_fmt(r.f1)},{_fmt(r.roc_auc)}")
        return "\n".join(lines) + "\n"

    def row(self, model: str) -> ComparisonRow:
        return next(r for r in self.rows if r.model == model)


def compare_models(encoded, cv: CvConfig = CvConfig(),
                   roster: Sequence[tuple[str, Callable]] | None = None, n_jobs=None) -> ComparisonTable:
    """Cross-validate every roster model on the same fold assignment.

    ``roster`` is an ordered list of ``(name, factory)``; the default is the
    six-model roster from :func:`appspred.baselines.default_roster`.
    """
    if roster is None:
        from .baselines import default_roster

        roster = default_roster()
    rows = []
    for name, factory in roster:
        mean = cross_validate(factory, encoded, cv, n_jobs, name=name).mean
        rows.append(ComparisonRow(name, mean["precision"], mean["recall"], mean["f1"], mean["roc_auc"]))
    return ComparisonTable(tuple(rows))
