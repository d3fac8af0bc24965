import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import BaseEstimator, ClassifierMixin

from appspred.baselines import ZeroRClassifier, default_roster
from appspred.encode import EncodedDataset, LabelEncoder
from appspred.evaluation import (
    ConfusionMatrix,
    CvConfig,
    binary_auc,
    class_metrics,
    compare_models,
    confusion_matrix,
    cross_validate,
    f1_score,
    fold_splits,
    k_fold,
    roc_auc_ovr,
    stratified_k_fold,
)
from appspred.exceptions import ConfigError, FoldError, InputError, NoAUCError
from appspred.schema import ContextFeature, ContextSchema
from oracles import pair_count_auc, recount_metrics


class TestConfusionMatrix:
    def test_hand_example(self):
        cm = confusion_matrix([0, 0, 1], [0, 1, 1], 2)
        np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 1]])

    def test_perfect_prediction_is_diagonal(self):
        y = np.array([0, 2, 2, 1, 2])
        cm = confusion_matrix(y, y, 3)
        np.testing.assert_array_equal(cm.counts, np.diag([1, 1, 3]))
        np.testing.assert_array_equal(cm.support, [1, 1, 3])

    @pytest.mark.parametrize("truth, pred", [([], []), ([0, 1], [0]), ([0, 3], [0, 1]), ([0.5], [0])])
    def test_input_errors(self, truth, pred):
        with pytest.raises(InputError):
            confusion_matrix(np.asarray(truth), np.asarray(pred), 2)

    def test_addition(self):
        a = confusion_matrix([0, 1], [0, 0], 2)
        b = confusion_matrix([1, 1], [1, 1], 2)
        assert (a + b) == ConfusionMatrix(np.array([[1, 0], [1, 2]]))


class TestClassMetrics:
    def test_eight_two_two(self):
        # class 0: TP=8, FP=2, FN=2
        counts = np.array([[8, 2], [2, 0]])
        m = class_metrics(ConfusionMatrix(counts))
        assert m.precision[0] == pytest.approx(0.8)
        assert m.recall[0] == pytest.approx(0.8)
        assert m.f1[0] == pytest.approx(0.8)

    def test_f1_of_equal_values(self):
        assert f1_score(0.37, 0.37) == pytest.approx(0.37)
        assert f1_score(0.0, 0.0) == 0.0

    def test_zero_division_is_zero(self):
        # class 1 never predicted and never true; class 2 predicted but never true
        m = class_metrics(confusion_matrix([0, 0, 0], [0, 2, 0], 3))
        assert m.precision[1] == 0 and m.recall[1] == 0 and m.f1[1] == 0
        assert m.precision[2] == 0

    def test_macro_over_supported_classes(self):
        m = class_metrics(confusion_matrix([0, 0, 1, 1], [0, 0, 1, 0], 4))
        assert m.macro_recall == pytest.approx((1.0 + 0.5) / 2)

    def test_matches_brute_force_recount(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            n, c = rng.integers(1, 21), rng.integers(2, 6)
            truth, pred = rng.integers(0, c, n), rng.integers(0, c, n)
            m = class_metrics(confusion_matrix(truth, pred, c))
            want = recount_metrics(truth.tolist(), pred.tolist(), int(c))
            np.testing.assert_allclose(m.precision, [w[0] for w in want], atol=1e-12)
            np.testing.assert_allclose(m.recall, [w[1] for w in want], atol=1e-12)
            np.testing.assert_allclose(m.f1, [w[2] for w in want], atol=1e-12)
            np.testing.assert_array_equal(m.support, [w[3] for w in want])
            assert m.accuracy == pytest.approx(np.mean(truth == pred))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40))
    def test_invariants(self, pairs):
        truth = np.array([t for t, _ in pairs])
        pred = np.array([p for _, p in pairs])
        cm = confusion_matrix(truth, pred, 4)
        m = class_metrics(cm)
        assert cm.total == len(pairs)
        for arr in (m.precision, m.recall, m.f1):
            assert np.all((arr >= 0) & (arr <= 1))
        assert np.all(m.f1 <= (m.precision + m.recall) / 2 + 1e-12)
        # micro precision = micro recall = accuracy
        tp = np.trace(cm.counts)
        assert tp / cm.counts.sum(axis=0).sum() == pytest.approx(m.accuracy)
        assert tp / cm.counts.sum(axis=1).sum() == pytest.approx(m.accuracy)


class TestAUC:
    def test_perfect_ranking(self):
        assert binary_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0

    def test_all_ties(self):
        assert binary_auc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5

    def test_hand_pairs(self):
        assert binary_auc([0.9, 0.2, 0.4, 0.6], [1, 1, 0, 0]) == pytest.approx(0.5)

    def test_undefined(self):
        assert math.isnan(binary_auc([0.1, 0.2], [1, 1]))

    def test_ovr_excludes_undefined_classes(self):
        scores = np.array([[0.9, 0.1, 0.0], [0.2, 0.8, 0.0], [0.6, 0.4, 0.0]])
        per_class, macro = roc_auc_ovr(scores, np.array([0, 1, 0]))
        assert math.isnan(per_class[2])
        assert macro == pytest.approx(np.mean(per_class[:2]))

    def test_no_auc(self):
        with pytest.raises(NoAUCError):
            roc_auc_ovr(np.ones((3, 1)), np.array([0, 0, 0]))

    def test_matches_pair_counting(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            n = rng.integers(2, 51)
            scores = rng.integers(0, 6, n) / 5.0  # coarse grid forces ties
            positive = rng.random(n) < 0.4
            want = pair_count_auc(scores.tolist(), positive.tolist())
            got = binary_auc(scores, positive)
            if math.isnan(want):
                assert math.isnan(got)
            else:
                assert got == pytest.approx(want, abs=1e-12)

    def test_monotone_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = rng.integers(2, 51)
            scores = rng.normal(size=n).round(1)
            positive = rng.random(n) < 0.5
            base = binary_auc(scores, positive)
            for g in (np.exp, lambda s: 3 * s ** 3 + 2, lambda s: np.arctan(s) - 7):
                other = binary_auc(g(scores), positive)
                if math.isnan(base):
                    assert math.isnan(other)
                else:
                    assert other == pytest.approx(base, abs=1e-12)


class TestFolds:
    def test_balanced_five_fold(self):
        labels = np.array([0] * 5 + [1] * 5)
        folds = stratified_k_fold(labels, 5, seed=0)
        for f in folds:
            assert sorted(labels[f].tolist()) == [0, 1]

    def test_leave_one_out(self):
        with pytest.warns(UserWarning):
            folds = stratified_k_fold(np.array([0, 1, 0, 1, 1]), 5, seed=0)
        assert sorted(len(f) for f in folds) == [1] * 5

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=10, max_size=120), st.integers(2, 10), st.integers(0, 10**6))
    def test_partition_and_balance(self, labels, k, seed):
        labels = np.array(labels)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            folds = stratified_k_fold(labels, k, seed)
        allidx = np.concatenate(folds)
        assert len(folds) == k
        np.testing.assert_array_equal(np.sort(allidx), np.arange(labels.size))
        for c in np.unique(labels):
            per_fold = np.array([np.sum(labels[f] == c) for f in folds])
            assert per_fold.max() - per_fold.min() <= 1
            assert np.all(np.abs(per_fold - np.sum(labels == c) / k) < 1)

    def test_deterministic(self):
        labels = np.random.default_rng(0).integers(0, 3, 90)
        a = stratified_k_fold(labels, 10, seed=4)
        b = stratified_k_fold(labels, 10, seed=4)
        c = stratified_k_fold(labels, 10, seed=5)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not all(np.array_equal(x, y) for x, y in zip(a, c))

    def test_small_class_warns(self):
        with pytest.warns(UserWarning):
            stratified_k_fold(np.array([0] * 20 + [1] * 2), 5, seed=0)

    @pytest.mark.parametrize("k", [1, 11])
    def test_bad_k(self, k):
        with pytest.raises(ConfigError):
            stratified_k_fold(np.zeros(10, int), k)
        with pytest.raises(ConfigError):
            k_fold(10, k)

    def test_plain_k_fold_partitions(self):
        folds = k_fold(23, 4, seed=1)
        np.testing.assert_array_equal(np.sort(np.concatenate(folds)), np.arange(23))

    def test_fold_splits(self):
        labels = np.random.default_rng(1).integers(0, 3, 40)
        for train, test in fold_splits(labels, CvConfig(k=4, seed=0)):
            assert np.intersect1d(train, test).size == 0
            assert train.size + test.size == 40


def _balanced_encoded(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    schema = ContextSchema((ContextFeature("f", "categorical", ("a", "b", "c")),), ("p", "q"))
    X = rng.integers(0, 3, size=(n, 1))
    y = np.repeat([0, 1], n // 2)
    return EncodedDataset(X, y, LabelEncoder(schema))


class _Oracle(ClassifierMixin, BaseEstimator):
    """Looks labels up from a table keyed by the (unique) row content."""

    def __init__(self, table=None):
        self.table = table

    def fit(self, X, y):
        self.classes_ = np.unique(y)
        return self

    def predict(self, X):
        return np.array([self.table[int(x[0])] for x in X])


class TestCrossValidate:
    def test_oracle_scores_one(self):
        schema = ContextSchema((ContextFeature("id", "categorical", tuple(map(str, range(60)))),), ("p", "q", "r"))
        X = np.arange(60).reshape(-1, 1)
        y = np.arange(60) % 3
        enc = EncodedDataset(X, y, LabelEncoder(schema))
        rep = cross_validate(_Oracle(dict(enumerate(y.tolist()))), enc, CvConfig(k=5))
        assert rep.mean["f1"] == 1.0 and rep.mean["precision"] == 1.0 and rep.mean["recall"] == 1.0

    def test_zeror_balanced_accuracy(self):
        rep = cross_validate(ZeroRClassifier(n_classes=2), _balanced_encoded(), CvConfig(k=10, seed=2))
        assert len(rep.folds) == 10
        assert abs(rep.mean["accuracy"] - 0.5) <= 0.05

    def test_report_structure(self, small_encoded):
        rep = cross_validate(dict(default_roster())["NB"], small_encoded, CvConfig(k=4, seed=0), name="NB")
        assert rep.confusion.total == small_encoded.n_records
        np.testing.assert_allclose(rep.mean["f1"], np.mean([f.metrics.macro_f1 for f in rep.folds]))
        labels = small_encoded.encoder.schema.label_domain
        d = rep.to_dict(labels)
        assert set(d) >= {"config", "folds", "mean", "confusion"}
        assert len(d["folds"]) == 4
        assert "timings" not in d and "timings" in rep.to_dict(labels, include_timings=True)
        csv = rep.per_class_csv(labels).splitlines()
        assert csv[0] == "app,precision,recall,f1,roc"
        assert len(csv) == 1 + len(labels)

    def test_deterministic(self, small_encoded):
        cv = CvConfig(k=3, seed=9)
        roster = dict(default_roster(n_trees=5))
        a = cross_validate(roster["RF"], small_encoded, cv).to_dict()
        b = cross_validate(roster["RF"], small_encoded, cv).to_dict()
        assert a == b

    def test_parallel_folds_match_serial(self, small_encoded):
        cv = CvConfig(k=3, seed=9)
        factory = dict(default_roster(n_trees=3))["RF"]
        a = cross_validate(factory, small_encoded, cv).to_dict()
        b = cross_validate(factory, small_encoded, cv, n_jobs=2).to_dict()
        assert a == b

    def test_errors_carry_fold_index(self, small_encoded):
        class Broken(ZeroRClassifier):
            def fit(self, X, y):
                raise RuntimeError("boom")

        with pytest.raises(FoldError) as info:
            cross_validate(Broken(), small_encoded, CvConfig(k=3))
        assert info.value.fold == 0
        assert "boom" in str(info.value)


class TestCompare:
    def test_table_shape_and_determinism(self, small_encoded):
        cv = CvConfig(k=3, seed=1)
        roster = default_roster(n_trees=5, epochs=30)
        a = compare_models(small_encoded, cv, roster)
        b = compare_models(small_encoded, cv, roster)
        assert [r.model for r in a.rows] == ["ZeroR", "NB", "SVM", "LR", "DT", "RF"]
        lines = a.to_csv().splitlines()
        assert lines[0] == "model,precision,recall,f1,roc"
        assert len(lines) == 7 and all(len(line.split(",")) == 5 for line in lines)
        assert a.to_csv() == b.to_csv()

    def test_ordering_on_planted_data(self, small_encoded):
        table = compare_models(small_encoded, CvConfig(k=5, seed=0), default_roster(n_trees=30, epochs=30))
        assert table.row("RF").f1 >= table.row("DT").f1 >= table.row("ZeroR").f1
