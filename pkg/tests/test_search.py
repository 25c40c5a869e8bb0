import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from clustercf.clustering import kmeans_fit
from clustercf.datasets import blobs
from clustercf.dataspace import CATEGORICAL, NUMERIC, FeatureEncoder, FeatureSchema, FeatureSpec
from clustercf.scoring import CentroidDistanceSy, HardSy
from clustercf.search import (
    OutlierGuard, PreconditionError, SearchConfig, expected_improvement, explain, fit_surrogate,
    sample_candidates,
)


def ei_quad(mean, std, best, xi):
    f = lambda y: max(y - best - xi, 0.0) * norm.pdf(y, mean, std)
    lo = max(best + xi, mean - 12 * std)
    if lo >= mean + 12 * std:
        return 0.0
    return integrate.quad(f, lo, mean + 12 * std, epsabs=1e-11, epsrel=1e-11, limit=200)[0]


class TestExpectedImprovement:
    def test_zero_std(self):
        assert expected_improvement(0.9, 0.0, 0.1) == 0.0

    def test_grid_against_quadrature(self):
        rng = np.random.default_rng(0)
        for mean, std, best in zip(rng.uniform(0, 1, 100), rng.uniform(0.01, 0.5, 100), rng.uniform(0, 1, 100)):
            assert expected_improvement(mean, std, best, 0.01) == pytest.approx(ei_quad(mean, std, best, 0.01), abs=1e-6)

    def test_monotone_in_mean(self):
        means = np.linspace(0, 1, 20)
        ei = expected_improvement(means, np.full(20, 0.1), 0.5)
        assert (np.diff(ei) >= 0).all()


class TestSampler:
    schema = FeatureSchema(tuple(FeatureSpec(f"f{i}", NUMERIC, 0.0, 1.0) for i in range(4)))

    def test_changed_count_uniform(self):
        origin = np.full(4, 0.5)
        C = sample_candidates(origin, self.schema, 20000, np.random.default_rng(1))
        k = (C != origin).sum(axis=1)
        counts = np.bincount(k, minlength=5)[1:] / len(C)
        np.testing.assert_allclose(counts, 0.25, atol=0.02)
        # each feature changes with probability E[k]/d = 2.5/4
        np.testing.assert_allclose((C != origin).mean(axis=0), 5 / 8, atol=0.05)

    def test_within_ranges(self):
        C = sample_candidates(np.full(4, 0.5), self.schema, 1000, np.random.default_rng(2))
        assert C.min() >= 0.0 and C.max() <= 1.0

    def test_categorical_changes_value(self):
        s = FeatureSchema((FeatureSpec("c", CATEGORICAL, domain=("a", "b", "c")),))
        C = sample_candidates(np.array([1.0]), s, 300, np.random.default_rng(0))
        assert set(C[:, 0].tolist()) == {0.0, 2.0}

    def test_constant_features_never_change(self):
        s = FeatureSchema((FeatureSpec("k", NUMERIC, 3.0, 3.0), FeatureSpec("n", NUMERIC, 0.0, 1.0)))
        C = sample_candidates(np.array([3.0, 0.5]), s, 100, np.random.default_rng(0))
        assert (C[:, 0] == 3.0).all() and (C[:, 1] != 0.5).all()


class TestSurrogate:
    def test_fits_smooth_function(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, (300, 2))
        y = X[:, 0] ** 2 + X[:, 1]
        mean, std = fit_surrogate(X, y, 50, 0).predict(X[:20])
        assert np.abs(mean - y[:20]).max() < 0.2 and (std >= 0).all()


class TestGuard:
    def test_training_coverage(self):
        X = np.random.default_rng(0).normal(size=(200, 3))
        g = OutlierGuard(X, seed=0)
        assert g.passes_batch(X).mean() >= 0.95

    def test_rejects_far_point(self):
        X = np.random.default_rng(0).normal(size=(200, 3))
        assert not OutlierGuard(X).passes(np.array([30.0, 30.0, 30.0]))

    def test_disabled(self):
        assert OutlierGuard(None, enabled=False).passes(np.array([1e9]))


@pytest.fixture(scope="module")
def fixture2():
    ds, _ = blobs([[0.0, 0.0], [5.0, 5.0]], n_per=60, seed=0)
    enc = FeatureEncoder.fit(ds)
    X = enc.encode(ds.codes)
    model = kmeans_fit(X, 2, seed=0)
    return ds, enc, model, OutlierGuard(X, seed=0)


def run(fixture, seed, sy_cls=HardSy, **kw):
    ds, enc, model, guard = fixture
    origin = ds.rows[0]
    target = 1 - model.assign(enc.encode_instance(origin))
    sy = sy_cls(model) if sy_cls is HardSy else sy_cls.from_model(model)
    cfg = SearchConfig(rng_seed=seed, max_rounds=5, time_budget=30.0, **kw)
    return explain(origin, target, model, sy, cfg, schema=ds.schema, encoder=enc, guard=guard)


class TestExplain:
    def test_valid_and_sorted(self, fixture2):
        ds, enc, model, guard = fixture2
        r = run(fixture2, 0)
        assert r.found
        for c in r.counterfactuals:
            e = enc.encode_instance(c.instance)
            assert model.assign(e) == r.target and guard.passes(e)
            b = c.breakdown
            assert b.total == pytest.approx(b.s_f * b.s_x * b.s_y, abs=1e-12)
        totals = [c.breakdown.total for c in r.counterfactuals]
        assert totals == sorted(totals, reverse=True)

    def test_deterministic_json(self, fixture2):
        ds = fixture2[0]
        a = run(fixture2, 4, CentroidDistanceSy).to_json(ds.schema, timing=False)
        b = run(fixture2, 4, CentroidDistanceSy).to_json(ds.schema, timing=False)
        assert a == b

    def test_target_is_current(self, fixture2):
        ds, enc, model, guard = fixture2
        cur = model.assign(enc.encode_instance(ds.rows[0]))
        with pytest.raises(PreconditionError):
            explain(ds.rows[0], cur, model, HardSy(model), SearchConfig(), schema=ds.schema, encoder=enc, guard=guard)

    def test_unknown_target(self, fixture2):
        ds, enc, model, guard = fixture2
        with pytest.raises(PreconditionError):
            explain(ds.rows[0], 7, model, HardSy(model), SearchConfig(), schema=ds.schema, encoder=enc, guard=guard)

    def test_round_budget(self, fixture2):
        r = run(fixture2, 1, patience=None)
        assert r.rounds == 5 and r.stop_reason == "max_rounds"
        assert r.evaluations == 100 + 5 * 20

    def test_bad_config(self):
        with pytest.raises(ValueError):
            SearchConfig(initial_samples=0)
