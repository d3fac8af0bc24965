"""Binary threshold decision trees over label-encoded features.

Nodes are stored in flat, preorder arrays (``feature``, ``threshold``,
``left``, ``right``, ``counts``); leaves carry ``feature == -1``. Every node,
internal or leaf, keeps the class counts of the training rows that reached it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import _kernels
from ._validation import check_codes, check_targets
from .exceptions import (
    ConfigError,
    EmptyNodeError,
    InconsistentSplitError,
    UndefinedImpurityError,
)

CRITERIA = ("gini", "info_gain")

# Gains closer than this are treated as ties (resolved by feature, then threshold).
GAIN_TOL = 1e-12

LEAF = -1


def impurity(counts, criterion: str = "gini") -> float:
    """Gini index ``1 - sum p_c^2`` or Shannon entropy in bits.

    >>> impurity([3, 1])
    0.375
    >>> impurity([5, 5], "info_gain")
    1.0
    """
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise UndefinedImpurityError("impurity of an empty node is undefined")
    return float(_impurity_rows(counts[None, :], criterion)[0])


def _impurity_rows(counts: np.ndarray, criterion: str) -> np.ndarray:
    """Row-wise impurity of a 2-D count array; rows with zero total give 0."""
    totals = counts.sum(axis=1, keepdims=True)
    safe = np.where(totals > 0, totals, 1.0)
    p = counts / safe
    if criterion == "gini":
        out = 1.0 - np.sum(p * p, axis=1)
    elif criterion == "info_gain":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
        out = terms.sum(axis=1)
    else:
        raise ConfigError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    out = np.where(totals[:, 0] > 0, out, 0.0)
    return np.maximum(out, 0.0)


def split_gain(parent, left, right, criterion: str = "gini") -> float:
    """Impurity improvement of a binary split.

    ``I(parent) - n_l/n_p * I(left) - n_r/n_p * I(right)``; never negative.
    """
    parent = np.asarray(parent, dtype=np.int64)
    left = np.asarray(left, dtype=np.int64)
    right = np.asarray(right, dtype=np.int64)
    if not (parent.shape == left.shape == right.shape) or np.any(left + right != parent):
        raise InconsistentSplitError(
            f"children {left.tolist()} + {right.tolist()} do not sum to parent {parent.tolist()}"
        )
    if np.any(left < 0) or np.any(right < 0):
        raise InconsistentSplitError("class counts must be non-negative")
    n_p = parent.sum()
    if n_p == 0:
        raise UndefinedImpurityError("split of an empty node")
    imp = _impurity_rows(np.stack([parent, left, right]).astype(np.float64), criterion)
    gain = imp[0] - (left.sum() / n_p) * imp[1] - (right.sum() / n_p) * imp[2]
    return float(gain) if gain > 0 else 0.0


@dataclass(frozen=True)
class SplitCandidate:
    feature_index: int
    threshold: float
    gain: float
    left_counts: tuple[int, ...]
    right_counts: tuple[int, ...]


@dataclass(frozen=True)
class TreeConfig:
    criterion: str = "gini"
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    feature_subset_size: Optional[int] = None  # None -> all D features

    def validate(self, n_features: int) -> int:
        """Check against the data's width; return the resolved subset size."""
        if self.criterion not in CRITERIA:
            raise ConfigError(f"unknown criterion {self.criterion!r}; expected one of {CRITERIA}")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")
        d = n_features if self.feature_subset_size is None else int(self.feature_subset_size)
        if not 1 <= d <= n_features:
            raise ConfigError(f"feature_subset_size={d} outside 1..{n_features}")
        return d


def best_split(rows, features, encoded, criterion: str = "gini", *, allow_zero_gain: bool = False):
    """Maximal-gain split of ``rows`` over the listed feature indices.

    Candidate thresholds sit midway between consecutive distinct codes.
    Ties go to the lowest feature index, then the lowest threshold. Returns
    ``None`` for a pure node or when no candidate has positive gain (with
    ``allow_zero_gain`` a zero-gain candidate is returned instead).
    """
    X, y = _arrays(encoded)
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    n_classes = _n_classes(encoded, y)
    crit = _criterion_code(criterion)
    parent = np.bincount(y[rows], minlength=n_classes).astype(np.int64)
    if rows.size < 2 or np.count_nonzero(parent) <= 1:
        return None
    feats = np.array(sorted(int(f) for f in features), dtype=np.int64)
    hist = np.zeros((int(X[rows].max()) + 1, n_classes), dtype=np.int64)
    cum = np.zeros(n_classes, dtype=np.int64)
    found, f, thr, gain = _kernels.split_search(
        X, y, rows, 0, rows.size, feats, feats.size, n_classes, crit, parent, hist, cum,
        allow_zero_gain,
    )
    if not found:
        return None
    go_left = X[rows, f] <= thr
    left = np.bincount(y[rows[go_left]], minlength=n_classes)
    return SplitCandidate(
        feature_index=int(f),
        threshold=float(thr),
        gain=float(gain),
        left_counts=tuple(int(c) for c in left),
        right_counts=tuple(int(c) for c in parent - left),
    )


def _criterion_code(criterion: str) -> int:
    if criterion == "gini":
        return _kernels.CRIT_GINI
    if criterion == "info_gain":
        return _kernels.CRIT_ENTROPY
    raise ConfigError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")


def _arrays(encoded):
    if hasattr(encoded, "X"):
        return encoded.X, encoded.y
    X, y = encoded
    return np.asarray(X, dtype=np.int64), np.asarray(y, dtype=np.int64)


def _n_classes(encoded, y):
    n = getattr(encoded, "n_classes", None)
    return int(n) if n is not None else int(y.max()) + 1


class DecisionTree:
    """A grown tree. Immutable by convention once built."""

    def __init__(self, feature, threshold, left, right, counts, config: TreeConfig, n_classes: int):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(-1, n_classes)
        self.config = config
        self.n_classes = int(n_classes)
        totals = self.counts.sum(axis=1, keepdims=True)
        self._dist = self.counts / np.where(totals > 0, totals, 1)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature == LEAF))

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # preorder: parents precede children
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        idx = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            a = idx[active]
            na = node[active]
            go_left = X[a, f[active]] <= self.threshold[na]
            node[a] = np.where(go_left, self.left[na], self.right[na])

    def predict_proba(self, X) -> np.ndarray:
        return self._dist[self.apply(X)]

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        def node(i):
            d = {"counts": self.counts[i].tolist()}
            if self.feature[i] != LEAF:
                d.update(
                    feature=int(self.feature[i]),
                    threshold=float(self.threshold[i]),
                    left=node(int(self.left[i])),
                    right=node(int(self.right[i])),
                )
            return d

        return {"n_classes": self.n_classes, "config": asdict(self.config), "root": node(0)}

    @classmethod
    def from_dict(cls, obj: dict) -> "DecisionTree":
        feature, threshold, left, right, counts = [], [], [], [], []

        def visit(d):
            i = len(feature)
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            counts.append(d["counts"])
            if "feature" in d:
                feature[i] = d["feature"]
                threshold[i] = d["threshold"]
                left[i] = visit(d["left"])
                right[i] = visit(d["right"])
            return i

        visit(obj["root"])
        return cls(feature, threshold, left, right, counts, TreeConfig(**obj["config"]), obj["n_classes"])

    def structurally_equal(self, other: "DecisionTree") -> bool:
        return (
            self.n_classes == other.n_classes
            and np.array_equal(self.feature, other.feature)
            and np.array_equal(self.threshold, other.threshold)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.counts, other.counts)
        )


def rng_state(seed) -> np.ndarray:
    """One-word SplitMix64 state for the compiled growth loop."""
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(0, 2**63))
    return np.array([int(seed or 0) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)


def _grow(X, y, rows, n_classes, config: TreeConfig, state, allow_zero_gain=True) -> DecisionTree:
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise EmptyNodeError("cannot grow a tree on zero rows")
    d = config.validate(X.shape[1])
    max_depth = -1 if config.max_depth is None else int(config.max_depth)
    # Zero-gain splits are taken so patterns such as XOR stay learnable.
    arrays = _kernels.grow(
        np.ascontiguousarray(X, dtype=np.int64), np.ascontiguousarray(y, dtype=np.int64), rows,
        int(n_classes), _criterion_code(config.criterion), max_depth,
        int(config.min_samples_split), d, state, allow_zero_gain,
    )
    return DecisionTree(*arrays, config, n_classes)


def grow_tree(rows, encoded, config: TreeConfig = TreeConfig(), rng=None) -> DecisionTree:
    """Grow a tree on ``rows`` of an encoded dataset.

    A fresh subset of ``config.feature_subset_size`` features is drawn at
    every node. ``rng`` is an integer seed (a ``numpy.random.Generator`` is
    reduced to one draw).
    """
    X, y = _arrays(encoded)
    return _grow(X, y, rows, _n_classes(encoded, y), config, rng_state(rng))


def tree_predict(tree: DecisionTree, row) -> tuple[int, np.ndarray]:
    dist = tree.predict_proba(np.asarray(row).reshape(1, -1))[0]
    return int(np.argmax(dist)), dist


class DecisionTreeClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around :func:`grow_tree`.

    Parameters
    ----------
    criterion : {"gini", "info_gain"}
    max_depth : int or None
    min_samples_split : int
    max_features : int or None
        Features sampled per node; ``None`` uses all of them.
    n_classes : int or None
        Total number of classes. Set it when a training fold may miss some
        classes so that ``predict_proba`` keeps a column for each.
    random_state : int or None
    """

    def __init__(self, criterion="gini", max_depth=None, min_samples_split=2,
                 max_features=None, n_classes=None, random_state=None):
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.n_classes = n_classes
        self.random_state = random_state

    def fit(self, X, y):
        X = check_codes(X)
        y, n_classes = check_targets(y, X.shape[0], self.n_classes)
        config = TreeConfig(self.criterion, self.max_depth, self.min_samples_split, self.max_features)
        self.tree_ = _grow(X, y, np.arange(X.shape[0]), n_classes, config,
                           rng_state(self.random_state))
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "tree_")
        return self.tree_.predict_proba(check_codes(X))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)
