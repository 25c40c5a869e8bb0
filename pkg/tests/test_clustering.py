import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from clustercf.clustering import (
    NOISE, ContractViolation, KMeansModel, cluster_summaries, dbscan_fit, kmeans_fit, load_model,
    model_from_dict, model_to_dict, save_model,
)
from clustercf.datasets import wine
from clustercf.dataspace import FeatureEncoder


def two_blobs(seed=0, n=50, spread=0.3):
    rng = np.random.default_rng(seed)
    means = np.array([[0.0, 0.0], [5.0, 5.0]])
    X = np.vstack([m + spread * rng.standard_normal((n, 2)) for m in means])
    return X, means


class TestKMeans:
    def test_k1_is_column_mean(self):
        X = np.random.default_rng(1).normal(size=(30, 3))
        m = kmeans_fit(X, 1, seed=0)
        np.testing.assert_allclose(m.centroids[0], X.mean(axis=0))
        assert set(m.labels.tolist()) == {0}

    def test_two_blobs(self):
        X, means = two_blobs()
        m = kmeans_fit(X, 2, seed=3)
        for mu in means:
            assert np.min(np.linalg.norm(m.centroids - mu, axis=1)) < 0.1

    def test_k_bounds(self):
        X = np.zeros((3, 2))
        with pytest.raises(ContractViolation):
            kmeans_fit(X, 4)
        with pytest.raises(ContractViolation):
            kmeans_fit(X, 0)

    def test_inertia_non_increasing(self):
        X = wine().codes
        X = (X - X.mean(0)) / X.std(0)
        for seed in range(5):
            h = kmeans_fit(X, 4, seed=seed).inertia_history
            assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))

    def test_points_assigned_to_nearest_centroid(self):
        X, _ = two_blobs(seed=2)
        m = kmeans_fit(X, 3, seed=0)
        d = np.linalg.norm(X[:, None, :] - m.centroids[None], axis=2)
        np.testing.assert_array_equal(m.labels, np.argmin(d, axis=1))

    def test_deterministic(self):
        X, _ = two_blobs()
        a, b = kmeans_fit(X, 2, seed=11), kmeans_fit(X, 2, seed=11)
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_wine_cardinalities(self):
        ds = wine()
        enc = FeatureEncoder.fit(ds, standardize=False)
        m = kmeans_fit(enc.encode(ds.codes), 3, seed=0)
        sizes = sorted(s.cardinality for s in m.summaries())
        assert all(abs(a - b) <= 3 for a, b in zip(sizes, sorted([69, 47, 62])))


class TestAssign:
    def model(self):
        C = np.array([[0.0, 0.0], [2.0, 0.0], [10.0, 10.0]])
        return KMeansModel(k=3, centroids=C, seed=0, inertia=0.0, labels=np.zeros(0, dtype=np.int64))

    def test_at_centroid(self):
        assert self.model().assign([10.0, 10.0]) == 2

    def test_tie_goes_low(self):
        assert self.model().assign([1.0, 0.0]) == 0

    def test_dim_mismatch(self):
        with pytest.raises(ContractViolation):
            self.model().assign([1.0, 0.0, 0.0])

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, 2, elements=st.floats(-20, 20)))
    def test_exhaustive_argmin(self, x):
        m = self.model()
        d = np.linalg.norm(m.centroids - x, axis=1)
        c = m.assign(x)
        assert d[c] <= d.min() + 1e-12

    def test_dbscan_far_point_is_noise(self):
        X, _ = two_blobs()
        m = dbscan_fit(X, eps=0.5, min_pts=3)
        assert m.assign([100.0, -100.0]) == NOISE


class TestSummaries:
    def test_singleton(self):
        X = np.array([[1.0, 1.0], [9.0, 9.0]])
        m = kmeans_fit(X, 2, seed=0)
        for s in m.summaries():
            assert s.min_dist == s.max_dist == 0.0 and s.cardinality == 1

    def test_symmetric_pair(self):
        X = np.array([[-2.0, 0.0], [2.0, 0.0]])
        (s,) = kmeans_fit(X, 1).summaries()
        assert s.min_dist == s.max_dist == pytest.approx(2.0)

    def test_collinear(self):
        X = np.array([[0.0], [1.0], [5.0]])
        (s,) = kmeans_fit(X, 1).summaries()
        assert s.centroid[0] == pytest.approx(2.0)
        assert (s.min_dist, s.max_dist) == (pytest.approx(1.0), pytest.approx(3.0))

    def test_members_within_bounds(self):
        X = wine().codes
        X = (X - X.mean(0)) / X.std(0)
        m = kmeans_fit(X, 3, seed=0)
        for s in m.summaries():
            d = np.linalg.norm(X[m.labels == s.cluster_id] - s.centroid, axis=1)
            assert s.min_dist - 1e-12 <= d.min() and d.max() <= s.max_dist + 1e-12

    def test_empty_cluster_excluded(self):
        X = np.array([[0.0], [1.0]])
        m = KMeansModel(k=2, centroids=np.array([[0.5], [100.0]]), seed=0, inertia=0.0,
                        labels=np.zeros(2, dtype=np.int64))
        summaries, warnings = cluster_summaries(m, X)
        assert [s.cluster_id for s in summaries] == [0]
        assert len(warnings) == 1


class TestDbscan:
    def test_huge_eps_single_cluster(self):
        X = np.random.default_rng(0).normal(size=(20, 2))
        m = dbscan_fit(X, eps=100.0, min_pts=1)
        assert set(m.labels.tolist()) == {0} and m.num_clusters == 1

    def test_all_noise(self):
        X = np.arange(10, dtype=float)[:, None] * 10.0
        m = dbscan_fit(X, eps=1.0, min_pts=2)
        assert set(m.labels.tolist()) == {NOISE} and m.num_clusters == 0

    def grid_blobs(self):
        # 50-point 5x10 grids with spacing 1, separated by far more than their extent
        g = np.array([[i, j] for i in range(5) for j in range(10)], dtype=float)
        return np.vstack([g, g + 100.0])

    def test_two_blobs(self):
        X = self.grid_blobs()
        m = dbscan_fit(X, eps=3.0, min_pts=4)
        assert m.num_clusters == 2 and not (m.labels == NOISE).any()
        # brute force: every point has >= min_pts neighbours within eps
        d = np.linalg.norm(X[:, None] - X[None], axis=2)
        assert ((d <= 3.0).sum(axis=1) >= 4).all()
        for c in (0, 1):
            assert len(set(m.labels[c * 50:(c + 1) * 50].tolist())) == 1

    def test_core_samples_have_neighbours(self):
        X = np.random.default_rng(3).normal(size=(60, 2))
        m = dbscan_fit(X, eps=0.4, min_pts=4)
        d = np.linalg.norm(m.core_samples[:, None] - X[None], axis=2)
        assert ((d <= 0.4).sum(axis=1) >= 4).all()

    def test_permutation_invariance(self):
        X = self.grid_blobs()
        perm = np.random.default_rng(0).permutation(len(X))
        a = dbscan_fit(X, 3.0, 4).labels
        b = dbscan_fit(X[perm], 3.0, 4).labels
        # same partition up to relabeling
        pairs = set(zip(a[perm].tolist(), b.tolist()))
        assert len(pairs) == len(set(a.tolist()))

    def test_bad_params(self):
        with pytest.raises(ContractViolation):
            dbscan_fit(np.zeros((2, 2)), eps=0.0, min_pts=1)


@pytest.mark.parametrize("algo", ["kmeans", "dbscan"])
def test_json_round_trip(tmp_path, algo):
    X, _ = two_blobs()
    m = kmeans_fit(X, 2, seed=0) if algo == "kmeans" else dbscan_fit(X, 0.5, 3)
    path = tmp_path / "m.json"
    save_model(m, path)
    again, doc = load_model(path)
    assert doc["algorithm"] == algo
    probe = np.random.default_rng(5).normal(2.5, 3, size=(50, 2))
    np.testing.assert_array_equal(m.assign_batch(probe), again.assign_batch(probe))
    assert [s.to_dict() for s in again.summaries()] == [s.to_dict() for s in m.summaries()]
    assert json.loads(json.dumps(model_to_dict(model_from_dict(doc)))) == doc
