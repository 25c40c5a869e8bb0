"""Bayesian counterfactual search.

Each round draws a pool of random perturbations of the origin, ranks them by
expected improvement under a random-forest surrogate of the objective, and
evaluates only the most promising ones with the true score. Candidates the
model assigns to the target cluster and that pass the outlier guard are
kept as counterfactuals.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm
from sklearn.ensemble import IsolationForest, RandomForestRegressor

from clustercf.clustering import ClusterModel, NOISE
from clustercf.dataspace import FeatureEncoder, FeatureSchema
from clustercf.scoring import ScoreBreakdown, SyStrategy, score_codes

STRATEGIES = ("hard", "centroid_distance", "membership")
STRATEGY_ALIASES = {"distance": "centroid_distance", "specific": "centroid_distance",
                    "agnostic": "membership", "baseline": "hard"}


class PreconditionError(ValueError):
    pass


@dataclass
class SearchConfig:
    sy_strategy: str = "hard"
    initial_samples: int = 100
    candidates_per_round: int = 500
    evaluations_per_round: int = 20
    max_rounds: int = 50
    patience: int | None = 5
    time_budget: float = 60.0
    xi: float = 0.01
    surrogate_trees: int = 100
    rng_seed: int = 0
    outlier_guard_enabled: bool = True
    # model-agnostic scorer
    share: float = 0.2
    stc_threshold: float = 0.75
    stc_max_rounds: int = 10
    stc_trees: int = 100

    def __post_init__(self):
        self.sy_strategy = STRATEGY_ALIASES.get(self.sy_strategy, self.sy_strategy)
        if self.sy_strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.sy_strategy!r}")
        if self.xi < 0:
            raise ValueError("xi must be >= 0")
        for name in ("initial_samples", "candidates_per_round", "evaluations_per_round", "surrogate_trees"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.max_rounds < 0 or self.time_budget <= 0:
            raise ValueError("budgets must be positive")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 or None")
        if not 0 < self.share <= 1:
            raise ValueError("share must be in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CandidateCounterfactual:
    instance: tuple
    codes: np.ndarray = field(repr=False)
    breakdown: ScoreBreakdown
    assigned_cluster: int
    valid: bool
    found_at: float
    evaluation: int

    def changed_features(self, origin: tuple, schema: FeatureSchema) -> dict:
        out = {}
        for spec, a, b in zip(schema.features, origin, self.instance):
            if a != b:
                out[spec.name] = {"from": a, "to": b} if spec.is_categorical \
                    else {"from": a, "to": b, "delta": b - a}
        return out


@dataclass
class SearchResult:
    origin: tuple
    target: int
    counterfactuals: list[CandidateCounterfactual]
    time_to_first: float | None
    time_to_best: float | None
    evaluations: int
    rounds: int = 0
    elapsed: float = 0.0
    stop_reason: str = ""
    best_score_trace: list[float] = field(default_factory=list, repr=False)

    @property
    def found(self) -> bool:
        return bool(self.counterfactuals)

    @property
    def best(self) -> CandidateCounterfactual | None:
        return self.counterfactuals[0] if self.counterfactuals else None

    def to_dict(self, schema: FeatureSchema, timing: bool = True) -> dict:
        """JSON-ready document; ``timing=False`` drops wall-clock fields so that
        seeded reruns serialize byte-identically."""
        cfs = []
        for cf in self.counterfactuals:
            item = {
                "changes": cf.changed_features(self.origin, schema),
                "breakdown": cf.breakdown.to_dict(),
                "evaluation": cf.evaluation,
            }
            if timing:
                item["found_at"] = cf.found_at
            cfs.append(item)
        telemetry = {
            "evaluations": self.evaluations,
            "rounds": self.rounds,
            "stop_reason": self.stop_reason,
            "count": len(self.counterfactuals),
            "first_evaluation": min((cf.evaluation for cf in self.counterfactuals), default=None),
            "best_evaluation": self.best.evaluation if self.best else None,
        }
        if timing:
            telemetry.update(time_to_first=self.time_to_first, time_to_best=self.time_to_best,
                             elapsed=self.elapsed)
        return {
            "origin": dict(zip(schema.names, self.origin)),
            "target": self.target,
            "counterfactuals": cfs,
            "telemetry": telemetry,
        }

    def to_json(self, schema: FeatureSchema, timing: bool = True) -> str:
        return json.dumps(self.to_dict(schema, timing), indent=2, sort_keys=True)


def sample_candidates(origin: np.ndarray, schema: FeatureSchema, n: int,
                      rng: np.random.Generator) -> np.ndarray:
    """``n`` perturbations of ``origin`` (a code vector), one per row.

    Each row changes a random feature subset: its size is uniform on
    ``1..d`` and the subset uniform among those of that size. Numeric
    features are redrawn uniformly inside the training range, categorical
    ones uniformly among the other domain values. Features that cannot
    change (constant range, single-value domain) are never picked.
    """
    origin = np.asarray(origin, dtype=np.float64)
    if n <= 0:
        return np.zeros((0, len(origin)))
    specs = schema.features
    mutable = np.array([len(f.domain) > 1 if f.is_categorical else f.high > f.low for f in specs])
    cols = np.flatnonzero(mutable)
    d = len(cols)
    out = np.tile(origin, (n, 1))
    if d == 0:
        return out
    sizes = rng.integers(1, d + 1, size=n)
    ranks = np.argsort(rng.random((n, d)), axis=1)
    change = np.zeros((n, len(origin)), dtype=bool)
    change[:, cols] = ranks < sizes[:, None]
    draws = rng.random((n, len(origin)))
    for j in cols:
        spec = specs[j]
        rows = change[:, j]
        if spec.is_categorical:
            k = len(spec.domain)
            cur = int(origin[j])
            pick = np.floor(draws[rows, j] * (k - 1)).astype(np.int64)
            pick[pick >= cur] += 1
            out[rows, j] = pick
        else:
            out[rows, j] = spec.low + draws[rows, j] * (spec.high - spec.low)
    return out


class Surrogate:
    """Bagged regression trees; predictions carry the across-tree spread."""

    def __init__(self, trees: int = 100, seed: int = 0):
        self.forest = RandomForestRegressor(n_estimators=trees, random_state=seed, bootstrap=True)

    def fit(self, X, y) -> "Surrogate":
        self.forest.fit(np.asarray(X), np.asarray(y))
        return self

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        per_tree = np.stack([t.predict(X) for t in self.forest.estimators_])
        return per_tree.mean(axis=0), per_tree.std(axis=0)


def fit_surrogate(X, y, trees: int = 100, rng_seed: int = 0) -> Surrogate:
    if len(X) < 1:
        raise ValueError("need at least one observation")
    return Surrogate(trees, rng_seed).fit(X, y)


def expected_improvement(mean, std, best: float, xi: float = 0.01):
    """Closed-form EI for maximization; zero where ``std`` is zero."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    gain = mean - best - xi
    out = np.zeros(np.broadcast(mean, std).shape)
    pos = np.broadcast_to(std > 0, out.shape)
    g = np.broadcast_to(gain, out.shape)[pos]
    s = np.broadcast_to(std, out.shape)[pos]
    z = g / s
    out[pos] = g * norm.cdf(z) + s * norm.pdf(z)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


class OutlierGuard:
    """Isolation forest on the encoded training data.

    The threshold is the 95th percentile of training anomaly scores, so at
    least 95% of the training rows pass.
    """

    def __init__(self, data, coverage: float = 0.95, trees: int = 100, seed: int = 0,
                 enabled: bool = True):
        self.enabled = enabled
        self.coverage = coverage
        self.forest = None
        self.threshold = np.inf
        if enabled:
            X = np.asarray(data, dtype=np.float64)
            self.forest = IsolationForest(n_estimators=trees, random_state=seed).fit(X)
            self.threshold = float(np.quantile(self.anomaly_score(X), coverage, method="higher"))

    def anomaly_score(self, X) -> np.ndarray:
        return -self.forest.score_samples(np.atleast_2d(X))

    def passes_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if not self.enabled:
            return np.ones(len(X), dtype=bool)
        return self.anomaly_score(X) <= self.threshold

    def passes(self, x) -> bool:
        return bool(self.passes_batch(np.asarray(x)[None, :])[0])


def fit_outlier_guard(data, enabled: bool = True, seed: int = 0) -> OutlierGuard:
    return OutlierGuard(data, seed=seed, enabled=enabled)


class _Run:
    """Mutable bookkeeping for one search."""

    def __init__(self, origin_codes, target, model, sy, schema, encoder, guard, start):
        self.origin = origin_codes
        self.target = target
        self.model = model
        self.sy = sy
        self.schema = schema
        self.encoder = encoder
        self.guard = guard
        self.start = start
        self.X_obs: list[np.ndarray] = []
        self.y_obs: list[np.ndarray] = []
        self.found: list[CandidateCounterfactual] = []
        self.seen: set[bytes] = set()
        self.evaluations = 0
        self.best_total = -np.inf

    def evaluate(self, C: np.ndarray) -> bool:
        """Score a batch; return True when the best observed objective improved."""
        E = self.encoder.encode(C)
        s_f, s_x, s_y, total = score_codes(C, self.origin, self.target, self.sy, self.schema,
                                           self.encoder, encoded=E)
        assigned = self.model.assign_batch(E)
        hit = assigned == self.target
        ok = np.zeros(len(C), dtype=bool)
        if hit.any():
            ok[hit] = self.guard.passes_batch(E[hit])
        now = time.monotonic() - self.start
        for i in np.flatnonzero(ok & (total > 0)):
            key = C[i].tobytes()
            if key in self.seen:
                continue
            self.seen.add(key)
            self.found.append(CandidateCounterfactual(
                instance=self.schema.from_codes(C[i]), codes=C[i].copy(),
                breakdown=ScoreBreakdown(float(s_f[i]), float(s_x[i]), float(s_y[i]), float(total[i])),
                assigned_cluster=int(assigned[i]), valid=True, found_at=now,
                evaluation=self.evaluations + int(i)))
        self.evaluations += len(C)
        self.X_obs.append(E)
        self.y_obs.append(total)
        top = float(total.max()) if len(total) else -np.inf
        improved = top > self.best_total
        self.best_total = max(self.best_total, top)
        return improved


def explain(origin, target: int, model: ClusterModel, sy: SyStrategy, config: SearchConfig, *,
            schema: FeatureSchema, encoder: FeatureEncoder, guard: OutlierGuard | None = None) -> SearchResult:
    """Search for counterfactuals of ``origin`` (an instance tuple) in cluster ``target``.

    ``guard`` defaults to no filtering when ``config.outlier_guard_enabled``
    is False; otherwise one must be supplied (it is fitted on training data).
    The run ends after ``max_rounds`` rounds, when the best observed score
    has not improved for ``patience`` rounds, or when ``time_budget`` runs out.
    """
    start = time.monotonic()
    if target == NOISE or target not in model.cluster_ids:
        raise PreconditionError(f"target {target} is not a cluster of the model")
    origin = tuple(origin)
    o = schema.to_codes(origin)
    current = model.assign(encoder.encode(o[None, :])[0])
    if current == target:
        raise PreconditionError(f"origin is already in cluster {target}")
    if guard is None or not config.outlier_guard_enabled:
        if config.outlier_guard_enabled:
            raise PreconditionError("outlier guard enabled but none supplied")
        guard = OutlierGuard(None, enabled=False)

    rng = np.random.default_rng(config.rng_seed)
    run = _Run(o, target, model, sy, schema, encoder, guard, start)
    run.evaluate(sample_candidates(o, schema, config.initial_samples, rng))
    trace = [run.best_total]
    stale = 0
    rounds = 0
    reason = "max_rounds"
    for r in range(config.max_rounds):
        if time.monotonic() - start > config.time_budget:
            reason = "time_budget"
            break
        if config.patience is not None and stale >= config.patience:
            reason = "converged"
            break
        X = np.vstack(run.X_obs)
        y = np.concatenate(run.y_obs)
        surrogate = fit_surrogate(X, y, config.surrogate_trees, config.rng_seed + r)
        pool = sample_candidates(o, schema, config.candidates_per_round, rng)
        mean, std = surrogate.predict(encoder.encode(pool))
        ei = expected_improvement(mean, std, run.best_total, config.xi)
        order = np.argsort(-ei, kind="stable")[: config.evaluations_per_round]
        improved = run.evaluate(pool[order])
        stale = 0 if improved else stale + 1
        rounds += 1
        trace.append(run.best_total)

    found = sorted(run.found, key=lambda c: (-c.breakdown.total, c.evaluation))
    first = min((c.found_at for c in found), default=None)
    best = found[0].found_at if found else None
    return SearchResult(origin=origin, target=target, counterfactuals=found, time_to_first=first,
                        time_to_best=best, evaluations=run.evaluations, rounds=rounds,
                        elapsed=time.monotonic() - start, stop_reason=reason, best_score_trace=trace)
