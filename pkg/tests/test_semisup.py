import numpy as np
import pytest

from clustercf.clustering import ContractViolation
from clustercf.semisup import MembershipModel, fit_ensemble, grow_tree, membership_probabilities, self_train


def blobs(seed=0, n=40):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0, 0.5, (n, 2)), rng.normal(4, 0.5, (n, 2))])
    return X, np.repeat([0, 1], n)


class TestTree:
    def test_pure_fit(self):
        X, y = blobs()
        t = grow_tree(X, y, 2, np.random.default_rng(0), min_split=2)
        P = t.predict_proba(X)
        np.testing.assert_array_equal(np.argmax(P, axis=1), y)

    def test_single_class_is_leaf(self):
        X = np.random.default_rng(0).normal(size=(10, 3))
        t = grow_tree(X, np.zeros(10, dtype=np.int64), 1, np.random.default_rng(0))
        assert t.node_count == 1


class TestEnsemble:
    def test_rows_sum_to_one(self):
        X, y = blobs()
        m = fit_ensemble(X, y, num_trees=20, seed=1)
        P = m.predict_proba(np.random.default_rng(2).normal(2, 3, (50, 2)))
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)

    def test_accuracy(self):
        X, y = blobs()
        Xt, yt = blobs(seed=9)
        assert (fit_ensemble(X, y, num_trees=20).predict(Xt) == yt).mean() >= 0.95

    def test_deterministic(self):
        X, y = blobs()
        a = fit_ensemble(X, y, 10, seed=3).predict_proba(X)
        b = fit_ensemble(X, y, 10, seed=3).predict_proba(X)
        np.testing.assert_array_equal(a, b)

    def test_class_labels_preserved(self):
        X, y = blobs()
        m = fit_ensemble(X, np.where(y == 0, 5, 9), num_trees=5)
        assert m.classes == [5, 9]

    def test_dim_check(self):
        X, y = blobs()
        with pytest.raises(ContractViolation):
            fit_ensemble(X, y, 3).predict_proba(np.zeros((1, 3)))


class TestSelfTraining:
    def test_pseudo_labels_propagate(self):
        X, y = blobs()
        seeds = np.array([0, 1, 40, 41])
        rest = np.setdiff1d(np.arange(80), seeds)
        m = self_train(X[seeds], y[seeds], X[rest], threshold=0.75, num_trees=20)
        assert m.pseudo_label_log[0] > 0
        labelled = m.labels[4:] >= 0
        assert (m.labels[4:][labelled] == y[rest][labelled]).all()
        np.testing.assert_array_equal(m.labels[:4], y[seeds])

    def test_no_unlabelled(self):
        X, y = blobs()
        m = self_train(X, y, None, num_trees=5)
        assert m.pseudo_label_log == [0]

    def test_threshold_one_rarely_adds(self):
        X, y = blobs()
        m = self_train(X[[0, 40]], y[[0, 40]], X[1:40], threshold=1.0, num_trees=10)
        assert (m.labels >= 0).sum() >= 2

    def test_bad_threshold(self):
        X, y = blobs()
        with pytest.raises(ValueError):
            self_train(X, y, threshold=0.5)

    def test_membership_vector(self):
        X, y = blobs()
        m = self_train(X, y, num_trees=10)
        p = membership_probabilities(m, X[0])
        assert p.shape == (2,) and p.sum() == pytest.approx(1.0)

    def test_membership_model_maps_missing_cluster(self):
        X, y = blobs()
        mm = MembershipModel(self_train(X, y, num_trees=5), [0, 1, 2])
        P = mm.predict_proba(X[:3])
        assert P.shape == (3, 3) and (P[:, 2] == 0).all()
        np.testing.assert_allclose(P.sum(axis=1), 1.0)
