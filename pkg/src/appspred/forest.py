"""Bagged random forest, majority voting, tree-count sweep and timing."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_codes, check_targets
from .evaluation import CvConfig, class_metrics, confusion_matrix, fold_splits
from .exceptions import ConfigError, DegenerateTrainingError, FoldError
from . import _kernels
from .tree import DecisionTree, TreeConfig, _grow, rng_state

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15

DEFAULT_GRID = (1, 5, 10, 15, 20, 30, 50, 75, 100, 150, 200)
DEFAULT_EPSILON = 0.005


def splitmix64(x: int) -> int:
    """SplitMix64 output finalizer on a 64-bit integer."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def tree_seed(master_seed: int, tree_index: int) -> int:
    """Seed of tree ``i``: the (i+1)-th output of a SplitMix64 stream at ``master_seed``."""
    return splitmix64((master_seed + (tree_index + 1) * _GOLDEN_GAMMA) & _MASK64)


def default_subset_size(n_features: int) -> int:
    return max(1, math.isqrt(n_features))


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 15
    feature_subset_size: Optional[int] = None  # None -> floor(sqrt(D))
    bootstrap: bool = True
    seed: int = 0
    max_depth: Optional[int] = None
    min_samples_split: int = 2

    def tree_config(self, n_features: int) -> TreeConfig:
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        d = self.feature_subset_size
        if d is None:
            d = default_subset_size(n_features)
        if not 1 <= d <= n_features:
            raise ConfigError(f"feature_subset_size={d} outside 1..{n_features}")
        return TreeConfig("gini", self.max_depth, self.min_samples_split, int(d))


def _fit_member(X, y, n_classes, tree_config, bootstrap, seed):
    # bootstrap draws and per-node feature draws share one stream
    state = rng_state(seed)
    n = X.shape[0]
    rows = _kernels.bootstrap_rows(state, n) if bootstrap else np.arange(n)
    return _grow(X, y, rows, n_classes, tree_config, state)


class RandomForest:
    """Trained forest: trees in index order plus the seeds that grew them."""

    def __init__(self, trees: Sequence[DecisionTree], seeds: Sequence[int], config: ForestConfig,
                 n_classes: int, encoder=None):
        self.trees = list(trees)
        self.seeds = [int(s) for s in seeds]
        self.config = config
        self.n_classes = int(n_classes)
        self.encoder = encoder

    def __len__(self):
        return len(self.trees)

    def prefix(self, n_trees: int) -> "RandomForest":
        """Forest made of the first ``n_trees`` members.

        Identical to training with ``n_trees`` directly, since member seeds
        depend only on the master seed and the member index.
        """
        return RandomForest(self.trees[:n_trees], self.seeds[:n_trees],
                            replace(self.config, n_trees=n_trees), self.n_classes, self.encoder)

    def tree_votes(self, X) -> np.ndarray:
        """(n_trees, n_rows) matrix of each member's argmax class."""
        return np.stack([t.predict(X) for t in self.trees])

    def vote_counts(self, X) -> np.ndarray:
        return _vote_counts(self.tree_votes(X), self.n_classes)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X)
        return np.argmax(self.vote_counts(X), axis=1)

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X)
        acc = np.zeros((X.shape[0], self.n_classes))
        for t in self.trees:
            acc += t.predict_proba(X)
        return acc / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "n_classes": self.n_classes,
            "trees": [{"seed": s, **t.to_dict()} for s, t in zip(self.seeds, self.trees)],
        }

    @classmethod
    def from_dict(cls, obj: dict, encoder=None) -> "RandomForest":
        trees = [DecisionTree.from_dict(t) for t in obj["trees"]]
        seeds = [t["seed"] for t in obj["trees"]]
        return cls(trees, seeds, ForestConfig(**obj["config"]), obj["n_classes"], encoder)

    def structurally_equal(self, other: "RandomForest") -> bool:
        return (
            self.seeds == other.seeds
            and len(self.trees) == len(other.trees)
            and all(a.structurally_equal(b) for a, b in zip(self.trees, other.trees))
        )


def _vote_counts(votes: np.ndarray, n_classes: int) -> np.ndarray:
    n_rows = votes.shape[1]
    counts = np.zeros((n_rows, n_classes), dtype=np.int64)
    cols = np.arange(n_rows)
    for v in votes:
        counts[cols, v] += 1
    return counts


def _fit_forest(X, y, n_classes, config: ForestConfig, n_jobs=None, encoder=None) -> RandomForest:
    if X.shape[0] < 1:
        raise DegenerateTrainingError("cannot train a forest on zero records")
    if np.count_nonzero(np.bincount(y, minlength=n_classes)) < 2:
        raise DegenerateTrainingError("training data holds a single class")
    tree_config = config.tree_config(X.shape[1])
    seeds = [tree_seed(config.seed, i) for i in range(config.n_trees)]
    if n_jobs in (None, 1):
        trees = [_fit_member(X, y, n_classes, tree_config, config.bootstrap, s) for s in seeds]
    else:
        trees = Parallel(n_jobs=n_jobs)(
            delayed(_fit_member)(X, y, n_classes, tree_config, config.bootstrap, s) for s in seeds
        )
    return RandomForest(trees, seeds, config, n_classes, encoder)


def train_forest(encoded, config: ForestConfig = ForestConfig(), n_jobs=None) -> RandomForest:
    """Train ``config.n_trees`` Gini trees, each on its own bootstrap sample.

    With ``n_jobs`` other than ``None``/``1`` members are grown on a joblib
    pool; the result is identical to serial training.
    """
    return _fit_forest(encoded.X, encoded.y, encoded.n_classes, config, n_jobs, encoded.encoder)


def forest_predict(forest: RandomForest, row) -> int:
    return int(forest.predict(np.asarray(row).reshape(1, -1))[0])


def forest_predict_proba(forest: RandomForest, row) -> np.ndarray:
    return forest.predict_proba(np.asarray(row).reshape(1, -1))[0]


class RandomForestClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around :func:`train_forest`.

    Parameters
    ----------
    n_estimators : int
    max_features : int or None
        Features sampled per node; ``None`` means ``floor(sqrt(D))``.
    bootstrap : bool
    random_state : int
        Master seed; member ``i`` uses ``tree_seed(random_state, i)``.
    max_depth, min_samples_split
        Passed to every member tree.
    n_classes : int or None
    n_jobs : int or None
    """

    def __init__(self, n_estimators=15, max_features=None, bootstrap=True, random_state=0,
                 max_depth=None, min_samples_split=2, n_classes=None, n_jobs=None):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.n_classes = n_classes
        self.n_jobs = n_jobs

    def _config(self) -> ForestConfig:
        return ForestConfig(self.n_estimators, self.max_features, self.bootstrap,
                            int(self.random_state or 0), self.max_depth, self.min_samples_split)

    def fit(self, X, y):
        X = check_codes(X)
        y, n_classes = check_targets(y, X.shape[0], self.n_classes)
        self.forest_ = _fit_forest(X, y, n_classes, self._config(), self.n_jobs)
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "forest_")
        return self.forest_.predict_proba(check_codes(X))

    def predict(self, X):
        check_is_fitted(self, "forest_")
        return self.forest_.predict(check_codes(X))


@dataclass(frozen=True)
class SweepPoint:
    n_trees: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class SweepResult:
    curve: tuple[SweepPoint, ...]
    chosen_n: int
    tolerance: float

    def to_csv(self) -> str:
        lines = ["n,precision,recall,f1"]
        lines += [f"{p.n_trees},{p.precision:.6f},{p.recall:.6f},{p.f1:.6f}" for p in self.curve]
        return "\n".join(lines) + "\n"

    def point(self, n_trees: int) -> SweepPoint:
        return next(p for p in self.curve if p.n_trees == n_trees)


def select_optimal_n(curve: Sequence[tuple[int, float]], epsilon: float = DEFAULT_EPSILON) -> int:
    """Smallest N whose F1 is within ``epsilon`` of the best F1 on the curve.

    >>> select_optimal_n([(1, .70), (5, .84), (10, .88), (15, .885), (20, .886)], 0.005)
    15
    """
    if not curve:
        raise ConfigError("empty sweep curve")
    if epsilon < 0:
        raise ConfigError("epsilon must be >= 0")
    best = max(f1 for _, f1 in curve)
    return min(n for n, f1 in curve if f1 >= best - epsilon)


def _check_grid(n_values) -> list[int]:
    grid = [int(n) for n in n_values]
    if not grid:
        raise ConfigError("tree-count grid is empty")
    if grid != sorted(set(grid)) or grid[0] < 1:
        raise ConfigError("tree-count grid must be strictly ascending positive integers")
    return grid


def sweep_optimal_trees(encoded, n_values=DEFAULT_GRID, epsilon: float = DEFAULT_EPSILON,
                        cv=None, base_config: ForestConfig = ForestConfig(), n_jobs=None) -> SweepResult:
    """Cross-validated macro precision/recall/F1 for each tree count.

    One forest of ``max(n_values)`` trees is grown per fold and its prefixes
    are scored, which equals training each size separately.
    """
    grid = _check_grid(n_values)
    cv = cv or CvConfig()
    n_classes = encoded.n_classes
    config = replace(base_config, n_trees=grid[-1])
    per_n = {n: [] for n in grid}
    for fold, (train, test) in enumerate(fold_splits(encoded.y, cv)):
        try:
            forest = _fit_forest(encoded.X[train], encoded.y[train], n_classes, config, n_jobs)
        except Exception as exc:
            raise FoldError(fold, exc) from exc
        cum = np.cumsum(
            np.eye(n_classes, dtype=np.int64)[forest.tree_votes(encoded.X[test])], axis=0
        )
        truth = encoded.y[test]
        for n in grid:
            pred = np.argmax(cum[n - 1], axis=1)
            m = class_metrics(confusion_matrix(truth, pred, n_classes))
            per_n[n].append((m.macro_precision, m.macro_recall, m.macro_f1))
    curve = tuple(
        SweepPoint(n, *(float(v) for v in np.mean(np.array(per_n[n]), axis=0))) for n in grid
    )
    chosen = select_optimal_n([(p.n_trees, p.f1) for p in curve], epsilon)
    return SweepResult(curve, chosen, float(epsilon))


@dataclass(frozen=True)
class TimingReport:
    entries: tuple[tuple[int, float], ...]  # (n_trees, seconds)

    def to_csv(self) -> str:
        return "n,millis\n" + "".join(f"{n},{s * 1000.0:.3f}\n" for n, s in self.entries)


def measure_training_time(encoded, n_values=DEFAULT_GRID, base_config: ForestConfig = ForestConfig(),
                          n_jobs=None) -> TimingReport:
    """Wall-clock duration of :func:`train_forest` for each tree count."""
    grid = _check_grid(n_values)
    entries = []
    for n in grid:
        config = replace(base_config, n_trees=n)
        start = time.perf_counter()
        train_forest(encoded, config, n_jobs)
        entries.append((n, time.perf_counter() - start))
    return TimingReport(tuple(entries))
