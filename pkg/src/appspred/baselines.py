"""Comparison classifiers: ZeroR, categorical naive Bayes, linear SVM,
softmax logistic regression and a single decision tree.

All expose ``fit`` / ``predict`` / ``predict_proba`` with ``predict`` equal
to the argmax of ``predict_proba`` (lowest class code wins ties).
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp, softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.pipeline import Pipeline
from sklearn.utils.validation import check_is_fitted

from ._validation import check_codes, check_real, check_targets
from .encode import OneHotExpander
from .exceptions import DivergenceError, TrainingError
from .forest import RandomForestClassifier
from .tree import DecisionTreeClassifier

DEFAULT_LEARNING_RATE = 0.1
DEFAULT_EPOCHS = 500
DEFAULT_L2 = 1e-4
DEFAULT_C = 1.0


def _require_rows(X):
    if X.shape[0] == 0:
        raise TrainingError("cannot train on an empty dataset")


class ZeroRClassifier(ClassifierMixin, BaseEstimator):
    """Predicts the majority training class for every input."""

    def __init__(self, n_classes=None):
        self.n_classes = n_classes

    def fit(self, X, y):
        X = check_codes(X)
        _require_rows(X)
        y, n_classes = check_targets(y, X.shape[0], self.n_classes)
        counts = np.bincount(y, minlength=n_classes)
        self.class_prior_ = counts / counts.sum()
        self.majority_ = int(np.argmax(counts))
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "class_prior_")
        n = np.asarray(X).shape[0]
        return np.tile(self.class_prior_, (n, 1))

    def predict(self, X):
        check_is_fitted(self, "class_prior_")
        return np.full(np.asarray(X).shape[0], self.majority_, dtype=np.int64)


class CategoricalNaiveBayes(ClassifierMixin, BaseEstimator):
    """Naive Bayes over categorical codes with add-``alpha`` smoothing.

    Conditionals are smoothed over each feature's full domain, so
    ``cardinalities`` should be given when a training fold may not contain
    every value. Priors get the same smoothing, which keeps every posterior
    strictly positive for ``alpha > 0``.
    """

    def __init__(self, alpha=1.0, n_classes=None, cardinalities=None):
        self.alpha = alpha
        self.n_classes = n_classes
        self.cardinalities = cardinalities

    def fit(self, X, y):
        X = check_codes(X, self.cardinalities)
        _require_rows(X)
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        y, n_classes = check_targets(y, X.shape[0], self.n_classes)
        card = self.cardinalities or tuple(int(c) for c in X.max(axis=0) + 1)
        alpha = float(self.alpha)
        class_count = np.bincount(y, minlength=n_classes).astype(np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.class_log_prior_ = np.log(
                (class_count + alpha) / (class_count.sum() + alpha * n_classes)
            )
            self.feature_log_prob_ = []
            for j, k in enumerate(card):
                table = np.zeros((n_classes, k))
                np.add.at(table, (y, X[:, j]), 1.0)
                num = table + alpha
                den = class_count[:, None] + alpha * k
                prob = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
                self.feature_log_prob_.append(np.log(prob))
        self.cardinalities_ = tuple(card)
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def joint_log_likelihood(self, X):
        check_is_fitted(self, "feature_log_prob_")
        X = check_codes(X, self.cardinalities_)
        jll = np.tile(self.class_log_prior_, (X.shape[0], 1))
        for j, table in enumerate(self.feature_log_prob_):
            jll = jll + table[:, X[:, j]].T
        return jll

    def predict_proba(self, X):
        jll = self.joint_log_likelihood(X)
        dead = ~np.isfinite(jll).any(axis=1)
        if dead.any():
            # every class has a zero conditional (alpha=0): fall back to the prior
            jll[dead] = self.class_log_prior_
        dead = ~np.isfinite(jll).any(axis=1)
        jll[dead] = 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


def softmax_objective(W, b, X, Y, l2):
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` and its gradients.

    ``Y`` is the one-hot target matrix. Returns ``(loss, dW, db)``.
    """
    logits = X @ W + b
    log_p = logits - logsumexp(logits, axis=1, keepdims=True)
    n = X.shape[0]
    loss = -np.sum(Y * log_p) / n + 0.5 * l2 * np.sum(W * W)
    G = (np.exp(log_p) - Y) / n
    return loss, X.T @ G + l2 * W, G.sum(axis=0)


class SoftmaxRegression(ClassifierMixin, BaseEstimator):
    """Multinomial logistic regression by full-batch gradient descent.

    Step size at epoch ``t`` (1-based) is ``learning_rate / sqrt(t)``.
    Weights start at zero. ``loss_curve_`` holds the loss before each step.
    """

    def __init__(self, learning_rate=DEFAULT_LEARNING_RATE, epochs=DEFAULT_EPOCHS, l2=DEFAULT_L2,
                 n_classes=None):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2 = l2
        self.n_classes = n_classes

    def fit(self, X, y):
        X = check_real(X)
        _require_rows(X)
        y, n_classes = check_targets(y, X.shape[0], self.n_classes)
        Y = np.eye(n_classes)[y]
        W = np.zeros((X.shape[1], n_classes))
        b = np.zeros(n_classes)
        curve = []
        for t in range(1, self.epochs + 1):
            # overflow is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                loss, dW, db = softmax_objective(W, b, X, Y, self.l2)
            if not np.isfinite(loss):
                raise DivergenceError(t, "logistic regression")
            curve.append(float(loss))
            step = self.learning_rate / np.sqrt(t)
            with np.errstate(over="ignore", invalid="ignore"):
                W = W - step * dW
                b = b - step * db
        self.coef_, self.intercept_ = W, b
        self.loss_curve_ = curve
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_real(X, self.coef_.shape[0]) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)


def hinge_objective(W, b, X, Ypm, C):
    """Per-class ``||w||^2 / (2 C n) + mean(max(0, 1 - y f(x)))`` and subgradients.

    ``Ypm`` holds +1/-1 one-vs-rest targets, one column per class. This is
    the usual ``0.5 ||w||^2 + C * sum(hinge)`` objective scaled by ``1/(C n)``.
    """
    n = X.shape[0]
    margins = Ypm * (X @ W + b)
    active = (margins < 1.0).astype(np.float64)
    obj = np.sum(W * W, axis=0) / (2.0 * C * n) + np.sum(np.maximum(0.0, 1.0 - margins), axis=0) / n
    coeff = -(active * Ypm) / n
    return obj, W / (C * n) + X.T @ coeff, coeff.sum(axis=0)


class LinearSVM(ClassifierMixin, BaseEstimator):
    """One-vs-rest linear SVMs trained by subgradient descent.

    Step size at epoch ``t`` is ``learning_rate / sqrt(t)``, halved (up to
    ``max_halvings`` times) for any class whose objective would rise; a class
    whose objective cannot be lowered keeps its weights for that epoch. The
    per-class objective is therefore non-increasing. Scores are a softmax
    over decision values and serve ranking only.
    """

    def __init__(self, learning_rate=DEFAULT_LEARNING_RATE, epochs=DEFAULT_EPOCHS, C=DEFAULT_C,
                 n_classes=None, max_halvings=30):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.C = C
        self.n_classes = n_classes
        self.max_halvings = max_halvings

    def fit(self, X, y):
        X = check_real(X)
        _require_rows(X)
        if self.C <= 0:
            raise ValueError("C must be > 0")
        y, n_classes = check_targets(y, X.shape[0], self.n_classes)
        Ypm = np.where(np.eye(n_classes, dtype=bool)[y], 1.0, -1.0)
        W = np.zeros((X.shape[1], n_classes))
        b = np.zeros(n_classes)
        curve = []
        n, C = X.shape[0], self.C
        for t in range(1, self.epochs + 1):
            obj, dW, db = hinge_objective(W, b, X, Ypm, C)
            if not np.all(np.isfinite(obj)):
                raise DivergenceError(t, "linear SVM")
            curve.append(float(obj.sum()))
            # margins and ||w||^2 are affine/quadratic in the step, so trial
            # steps need no further matrix products
            margins = Ypm * (X @ W + b)
            slope = Ypm * (X @ dW + db)
            ww = np.sum(W * W, axis=0)
            wd = np.sum(W * dW, axis=0)
            dd = np.sum(dW * dW, axis=0)
            step = np.full(W.shape[1], self.learning_rate / np.sqrt(t))
            pending = np.ones(W.shape[1], dtype=bool)
            taken = np.zeros(W.shape[1])
            for _ in range(self.max_halvings + 1):
                trial = (ww - 2 * step * wd + step * step * dd) / (2.0 * C * n) + np.sum(
                    np.maximum(0.0, 1.0 - (margins - step * slope)), axis=0) / n
                ok = pending & (trial <= obj)
                taken[ok] = step[ok]
                pending &= ~ok
                if not pending.any():
                    break
                step = np.where(pending, step / 2.0, step)
            W = W - taken * dW
            b = b - taken * db
        obj, _, _ = hinge_objective(W, b, X, Ypm, self.C)
        curve.append(float(obj.sum()))
        self.coef_, self.intercept_ = W, b
        self.objective_curve_ = curve
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_real(X, self.coef_.shape[0]) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)


def train_zeror(encoded) -> ZeroRClassifier:
    return ZeroRClassifier(n_classes=encoded.n_classes).fit(encoded.X, encoded.y)


def train_naive_bayes(encoded, alpha: float = 1.0) -> CategoricalNaiveBayes:
    return CategoricalNaiveBayes(alpha, encoded.n_classes, encoded.cardinalities).fit(encoded.X, encoded.y)


def train_logistic_regression(X, y, learning_rate=DEFAULT_LEARNING_RATE, epochs=DEFAULT_EPOCHS,
                              l2=DEFAULT_L2, n_classes=None) -> SoftmaxRegression:
    return SoftmaxRegression(learning_rate, epochs, l2, n_classes).fit(X, y)


def train_linear_svm(X, y, learning_rate=DEFAULT_LEARNING_RATE, epochs=DEFAULT_EPOCHS,
                     C=DEFAULT_C, n_classes=None) -> LinearSVM:
    return LinearSVM(learning_rate, epochs, C, n_classes).fit(X, y)


def train_single_dt(encoded, criterion: str = "info_gain") -> DecisionTreeClassifier:
    """Unrestricted tree grown with every feature available at each node."""
    return DecisionTreeClassifier(criterion=criterion, n_classes=encoded.n_classes).fit(encoded.X, encoded.y)


def one_hot_pipeline(model, encoded) -> Pipeline:
    return Pipeline([("onehot", OneHotExpander(encoded.cardinalities)), ("model", model)])


ROSTER_NAMES = ("ZeroR", "NB", "SVM", "LR", "DT", "RF")


def default_roster(n_trees: int = 15, seed: int = 0, subset_size=None, dt_criterion: str = "info_gain",
                   alpha: float = 1.0, learning_rate: float = DEFAULT_LEARNING_RATE,
                   epochs: int = DEFAULT_EPOCHS, l2: float = DEFAULT_L2, C: float = DEFAULT_C,
                   n_jobs=None):
    """Ordered ``(name, factory)`` pairs: ZeroR, NB, SVM, LR, DT, random forest."""
    return [
        ("ZeroR", lambda enc: ZeroRClassifier(n_classes=enc.n_classes)),
        ("NB", lambda enc: CategoricalNaiveBayes(alpha, enc.n_classes, enc.cardinalities)),
        ("SVM", lambda enc: one_hot_pipeline(LinearSVM(learning_rate, epochs, C, enc.n_classes), enc)),
        ("LR", lambda enc: one_hot_pipeline(SoftmaxRegression(learning_rate, epochs, l2, enc.n_classes), enc)),
        ("DT", lambda enc: DecisionTreeClassifier(criterion=dt_criterion, n_classes=enc.n_classes)),
        ("RF", lambda enc: RandomForestClassifier(n_estimators=n_trees, max_features=subset_size,
                                                  random_state=seed, n_classes=enc.n_classes,
                                                  n_jobs=n_jobs)),
    ]
