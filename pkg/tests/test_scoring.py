import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clustercf.clustering import NOISE, ClusterSummary, ContractViolation, KMeansModel, dbscan_fit
from clustercf.dataspace import CATEGORICAL, NUMERIC, Dataset, FeatureEncoder, FeatureSchema, FeatureSpec
from clustercf.scoring import (
    CentroidDistanceSy, HardSy, MembershipSy, ScoreBreakdown, combine, rescale_distance, score_f, score_x,
    sy_centroid_distance, sy_hard, sy_membership, total_score,
)


@pytest.fixture
def schema():
    return FeatureSchema((FeatureSpec("n", NUMERIC, 0.0, 10.0), FeatureSpec("c", CATEGORICAL, domain=("x", "y"))))


def kmeans3():
    C = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    return KMeansModel(k=3, centroids=C, seed=0, inertia=0.0, labels=np.zeros(0, dtype=np.int64))


class TestScoreF:
    def test_identity(self):
        assert score_f((1.0, "a"), (1.0, "a")) == 1.0

    def test_all_changed(self):
        assert score_f((2.0, "b"), (1.0, "a")) == 0.0

    def test_one_of_four(self):
        assert score_f((1.0, 2.0, 3.0, 9.0), (1.0, 2.0, 3.0, 4.0)) == 0.75


class TestScoreX:
    def test_identity(self, schema):
        assert score_x((3.0, "x"), (3.0, "x"), schema) == 1.0

    def test_gower_example(self, schema):
        assert score_x((2.0, "x"), (7.0, "x"), schema) == pytest.approx(0.75)

    def test_maximal(self, schema):
        assert score_x((0.0, "x"), (10.0, "y"), schema) == 0.0


class TestSyHard:
    def test_at_centroid(self):
        assert sy_hard(np.array([4.0, 0.0]), 1, kmeans3()) == 1.0

    def test_other_cluster(self):
        assert sy_hard(np.array([0.0, 4.0]), 1, kmeans3()) == 0.0

    def test_dbscan_noise(self):
        X = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]])
        m = dbscan_fit(X, 0.5, 2)
        assert m.assign([50.0, 50.0]) == NOISE
        assert sy_hard(np.array([50.0, 50.0]), 0, m) == 0.0


class TestSyCentroid:
    summary = ClusterSummary(1, np.array([0.0, 0.0]), 1.0, 3.0, 10)

    @pytest.mark.parametrize("d,expected", [(1.0, 1.0), (3.0, 0.0), (2.0, 0.5), (0.5, 1.0), (7.0, 0.0)])
    def test_formula_and_clipping(self, d, expected):
        assert sy_centroid_distance(np.array([d, 0.0]), 1, self.summary) == pytest.approx(expected)

    def test_degenerate_summary_is_step(self):
        s = ClusterSummary(0, np.array([0.0]), 2.0, 2.0, 1)
        assert sy_centroid_distance(np.array([1.5]), 0, s) == 1.0
        assert sy_centroid_distance(np.array([2.0]), 0, s) == 1.0
        assert sy_centroid_distance(np.array([2.5]), 0, s) == 0.0

    def test_wrong_summary(self):
        with pytest.raises(ContractViolation):
            sy_centroid_distance(np.array([0.0, 0.0]), 2, self.summary)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 50), st.floats(0, 50), st.floats(0, 10), st.floats(0, 10))
    def test_non_increasing_in_distance(self, d1, d2, lo, width):
        hi = lo + width
        a, b = sorted([d1, d2])
        sa, sb = rescale_distance([a, b], lo, hi)
        assert sa >= sb


class TestSyMembership:
    def test_uniform(self):
        assert sy_membership([0.25] * 4, 2) == 0.25

    def test_one_hot(self):
        assert sy_membership([0.0, 1.0, 0.0], 1) == 1.0

    def test_component(self):
        assert sy_membership([0.2, 0.7, 0.1], 1) == pytest.approx(0.7)

    def test_not_normalized(self):
        with pytest.raises(ContractViolation):
            sy_membership([0.2, 0.2], 0)

    def test_strategy_maps_classes(self):
        class Provider:
            classes = [3, 7]

            def predict_proba(self, X):
                return np.tile([0.4, 0.6], (len(X), 1))

        sy = MembershipSy(Provider())
        assert sy.score(np.zeros(2), 7) == pytest.approx(0.6)
        assert sy.score(np.zeros(2), 5) == 0.0


class TestTotal:
    def test_zero_component(self):
        assert combine(0.0, 0.9, 0.8) == 0.0

    def test_all_ones(self):
        assert combine(1.0, 1.0, 1.0) == 1.0

    def test_hand(self):
        assert combine(0.75, 0.9, 0.5) == pytest.approx(0.3375)

    def test_total_score_breakdown(self, schema):
        ds = Dataset(schema, ((0.0, "x"), (10.0, "y")))
        enc = FeatureEncoder.fit(ds)
        X = enc.encode(ds.codes)
        model = KMeansModel(k=2, centroids=X.copy(), seed=0, inertia=0.0, labels=np.array([0, 1]))
        b = total_score((10.0, "x"), (0.0, "x"), 1, HardSy(model), schema, enc)
        assert isinstance(b, ScoreBreakdown)
        assert b.s_f == 0.5 and b.s_x == pytest.approx(0.5)
        assert b.total == pytest.approx(b.s_f * b.s_x * b.s_y, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_total_monotone(a, b, c, bump):
    assert combine(min(1.0, a + bump), b, c) >= combine(a, b, c)
    assert combine(a, min(1.0, b + bump), c) >= combine(a, b, c)
    assert combine(a, b, min(1.0, c + bump)) >= combine(a, b, c)


def test_centroid_strategy_batch_matches_scalar():
    rng = np.random.default_rng(0)
    summaries = [ClusterSummary(0, np.zeros(3), 0.5, 2.0, 5), ClusterSummary(1, np.ones(3), 0.1, 1.0, 5)]
    sy = CentroidDistanceSy(summaries)
    X = rng.normal(size=(40, 3))
    batch = sy.score_batch(X, 1)
    assert batch == pytest.approx([sy_centroid_distance(x, 1, summaries[1]) for x in X])


def test_hard_strategy_is_validity():
    model = kmeans3()
    X = np.random.default_rng(1).uniform(-2, 6, size=(100, 2))
    s = HardSy(model).score_batch(X, 2)
    np.testing.assert_array_equal(s == 1.0, model.assign_batch(X) == 2)
