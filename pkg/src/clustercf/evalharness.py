"""Benchmark protocol, per-strategy metrics and the Mann-Whitney U comparison.

Protocol: take the two most populated clusters B and C, explain a few random
members of B towards C and of C towards B, repeat each search a few times
with different seeds, and summarise every strategy as one metrics row.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm, rankdata

from clustercf import kernels
from clustercf.clustering import NOISE, ClusterModel
from clustercf.engine import Explainer
from clustercf.search import STRATEGY_ALIASES, SearchConfig, SearchResult

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("dataset", "model", "strategy", "share", "exp_pct", "score_x_mean", "score_x_std",
               "score_f_mean", "score_f_std", "t_first_mean", "t_first_std", "t_best_mean", "t_best_std",
               "cf_count_mean", "cf_count_std")

# how a successful run is reduced to one (Sx, Sf) pair
AGGREGATIONS = ("best", "all", "best_proximity")


@dataclass(frozen=True)
class ProtocolSpec:
    instances_per_cluster: int = 5
    top_clusters: int = 2
    repeats: int = 3
    strategies: tuple[str, ...] = ("hard", "centroid_distance", "membership")
    seeds: tuple[int, ...] | None = None  # one per repeat; defaults to 0..repeats-1

    def __post_init__(self):
        if self.instances_per_cluster < 1 or self.repeats < 1:
            raise ValueError("instances_per_cluster and repeats must be positive")
        if self.top_clusters != 2:
            raise ValueError("the cross-target protocol uses exactly two clusters")
        if self.seeds is not None and len(self.seeds) != self.repeats:
            raise ValueError("need one seed per repeat")
        object.__setattr__(self, "strategies",
                           tuple(STRATEGY_ALIASES.get(s, s) for s in self.strategies))

    @property
    def repeat_seeds(self) -> tuple[int, ...]:
        return tuple(self.seeds) if self.seeds is not None else tuple(range(self.repeats))

    @property
    def runs_per_strategy(self) -> int:
        return self.instances_per_cluster * self.top_clusters * self.repeats


def select_protocol_instances(labels, spec: ProtocolSpec, rng_seed: int = 0,
                              warnings: list | None = None) -> list[tuple[int, int]]:
    """``(row index, target cluster)`` pairs for the two largest clusters.

    Members of the largest cluster B target the runner-up C and vice versa.
    Cardinality ties go to the lower cluster id.
    """
    labels = np.asarray(labels, dtype=np.int64)
    ids = sorted(int(c) for c in set(labels.tolist()) if c != NOISE)
    if len(ids) < 2:
        raise ValueError("the protocol needs at least two clusters")
    sizes = [(-(labels == c).sum(), c) for c in ids]
    (_, b), (_, c) = sorted(sizes)[:2]
    rng = np.random.default_rng(rng_seed)
    pairs = []
    for source, target in ((b, c), (c, b)):
        members = np.flatnonzero(labels == source)
        n = spec.instances_per_cluster
        if len(members) < n:
            msg = f"cluster {source} has {len(members)} members, fewer than {n}; using all"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            n = len(members)
        pick = rng.choice(members, n, replace=False)
        pairs.extend((int(i), int(target)) for i in pick)
    return pairs


def mann_whitney_u(sample_a, sample_b) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test.

    ``U`` counts pairs with ``a < b`` (ties count one half). The p-value uses
    the normal approximation with tie-corrected variance and a continuity
    correction of 0.5.
    """
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    ranks = rankdata(np.concatenate([a, b]))
    u = float(ranks[n1:].sum() - n2 * (n2 + 1) / 2)
    n = n1 + n2
    _, counts = np.unique(np.concatenate([a, b]), return_counts=True)
    ties = float((counts ** 3 - counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - ties / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return u, 1.0
    z = (abs(u - n1 * n2 / 2.0) - 0.5) / math.sqrt(var)
    p = 2.0 * norm.sf(z) if z > 0 else 1.0
    return u, float(min(1.0, p))


@dataclass
class RunRecord:
    strategy: str
    share: float | None
    origin_index: int
    target: int
    repeat: int
    seed: int
    found: bool
    scores: list[tuple[float, float, float]]  # (s_x, s_f, total) in result order
    time_to_first: float | None
    time_to_best: float | None
    cf_count: int
    evaluations: int
    stop_reason: str
    result: dict = field(default_factory=dict, repr=False)

    def per_run_scores(self, aggregation: str = "best") -> tuple[float, float] | None:
        if not self.found:
            return None
        s = np.asarray(self.scores)
        if aggregation == "best":
            return float(s[0, 0]), float(s[0, 1])
        if aggregation == "all":
            return float(s[:, 0].mean()), float(s[:, 1].mean())
        if aggregation == "best_proximity":
            i = int(np.argmax(s[:, 0] * s[:, 1]))
            return float(s[i, 0]), float(s[i, 1])
        raise ValueError(f"unknown aggregation {aggregation!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_std(values) -> tuple[float | None, float | None]:
    if len(values) == 0:
        return None, None
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())


@dataclass
class MetricsRow:
    dataset: str
    model: str
    strategy: str
    share: float | None
    exp_pct: float
    score_x: tuple[float | None, float | None]
    score_f: tuple[float | None, float | None]
    time_to_first: tuple[float | None, float | None]
    time_to_best: tuple[float | None, float | None]
    cf_count: tuple[float | None, float | None]
    runs: int = 0
    explained: int = 0

    @classmethod
    def from_records(cls, records: list[RunRecord], dataset: str, model: str,
                     aggregation: str = "best") -> "MetricsRow":
        """Exp% over all runs; every other column over successful runs only."""
        ok = [r for r in records if r.found]
        pairs = [r.per_run_scores(aggregation) for r in ok]
        first = records[0] if records else None
        return cls(
            dataset=dataset, model=model,
            strategy=first.strategy if first else "", share=first.share if first else None,
            exp_pct=100.0 * len(ok) / len(records) if records else 0.0,
            score_x=_mean_std([p[0] for p in pairs]),
            score_f=_mean_std([p[1] for p in pairs]),
            time_to_first=_mean_std([r.time_to_first for r in ok]),
            time_to_best=_mean_std([r.time_to_best for r in ok]),
            cf_count=_mean_std([r.cf_count for r in ok]),
            runs=len(records), explained=len(ok),
        )

    def csv_values(self) -> list[str]:
        def fmt(v):
            return "" if v is None else f"{v:.6f}"

        return [self.dataset, self.model, self.strategy, fmt(self.share), fmt(self.exp_pct),
                fmt(self.score_x[0]), fmt(self.score_x[1]), fmt(self.score_f[0]), fmt(self.score_f[1]),
                fmt(self.time_to_first[0]), fmt(self.time_to_first[1]),
                fmt(self.time_to_best[0]), fmt(self.time_to_best[1]),
                fmt(self.cf_count[0]), fmt(self.cf_count[1])]


@dataclass
class BenchmarkResult:
    rows: list[MetricsRow]
    records: list[RunRecord]
    metadata: dict

    def records_for(self, strategy: str, share: float | None = None) -> list[RunRecord]:
        strategy = STRATEGY_ALIASES.get(strategy, strategy)
        return [r for r in self.records if r.strategy == strategy and (share is None or r.share == share)]

    def row(self, strategy: str, share: float | None = None) -> MetricsRow:
        strategy = STRATEGY_ALIASES.get(strategy, strategy)
        for r in self.rows:
            if r.strategy == strategy and (share is None or r.share == share):
                return r
        raise KeyError(strategy)

    def rows_for(self, aggregation: str) -> list[MetricsRow]:
        """Recompute the table under another per-run reduction."""
        out = []
        for row in self.rows:
            recs = [r for r in self.records if r.strategy == row.strategy and r.share == row.share]
            out.append(MetricsRow.from_records(recs, row.dataset, row.model, aggregation))
        return out

    def to_log(self) -> dict:
        return {"metadata": self.metadata, "rows": [asdict(r) for r in self.rows],
                "runs": [r.to_dict() for r in self.records]}

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_log(), fh, indent=1, sort_keys=True)


def cardinality_check(sizes, reference, tolerance: int = 3) -> dict:
    """Compare cluster sizes with a reference as multisets (sorted pairing)."""
    got, ref = sorted(int(s) for s in sizes), sorted(int(s) for s in reference)
    ok = len(got) == len(ref) and all(abs(a - b) <= tolerance for a, b in zip(got, ref))
    return {"cardinalities": got, "reference": ref, "tolerance": tolerance, "matches": ok}


def _record(result: SearchResult, schema, strategy, share, idx, target, repeat, seed) -> RunRecord:
    return RunRecord(
        strategy=strategy, share=share, origin_index=idx, target=target, repeat=repeat, seed=seed,
        found=result.found,
        scores=[(c.breakdown.s_x, c.breakdown.s_f, c.breakdown.total) for c in result.counterfactuals],
        time_to_first=result.time_to_first, time_to_best=result.time_to_best,
        cf_count=len(result.counterfactuals), evaluations=result.evaluations,
        stop_reason=result.stop_reason, result=result.to_dict(schema))


def run_benchmark(explainer: Explainer, spec: ProtocolSpec = ProtocolSpec(),
                  config: SearchConfig = SearchConfig(), *, shares=None, dataset_name: str | None = None,
                  model_name: str | None = None, aggregation: str = "best", notes: dict | None = None,
                  progress=None) -> BenchmarkResult:
    """Run every (instance, repeat, strategy[, share]) search and aggregate.

    ``shares`` only applies to the membership strategy, which gets one row per
    share; the other strategies ignore it. Run seeds are
    ``config.rng_seed + 1000 * repeat_seed + instance_position``, so every
    strategy sees the same seeds.
    """
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
    if not spec.strategies:
        raise ValueError("no strategies requested")
    shares = tuple(shares) if shares else (config.share,)
    model: ClusterModel = explainer.model
    labels = model.assign_batch(explainer.X) if model.algorithm == "kmeans" else model.labels
    warnings: list[str] = []
    pairs = select_protocol_instances(labels, spec, config.rng_seed, warnings)
    dataset_name = dataset_name or explainer.dataset.id or "dataset"
    model_name = model_name or model.algorithm
    schema = explainer.dataset.schema

    records: list[RunRecord] = []
    rows: list[MetricsRow] = []
    for strategy in spec.strategies:
        for share in (shares if strategy == "membership" else (None,)):
            group = []
            for rep, rep_seed in enumerate(spec.repeat_seeds):
                for pos, (idx, target) in enumerate(pairs):
                    seed = config.rng_seed + 1000 * rep_seed + pos
                    cfg = SearchConfig(**{**config.to_dict(), "sy_strategy": strategy, "rng_seed": seed,
                                          "share": share if share is not None else config.share})
                    # one membership model per share, independent of the run seed
                    sy = explainer.strategy(SearchConfig(**{**cfg.to_dict(), "rng_seed": config.rng_seed}))
                    try:
                        result = explainer.explain(explainer.dataset.rows[idx], target, cfg, sy=sy)
                    except Exception as exc:  # recorded as unexplained
                        logger.exception("run failed")
                        warnings.append(f"{strategy} run {idx}->{target} seed {seed} failed: {exc}")
                        result = SearchResult(explainer.dataset.rows[idx], target, [], None, None, 0,
                                              stop_reason=f"error: {exc}")
                    rec = _record(result, schema, strategy, share, idx, target, rep, seed)
                    group.append(rec)
                    if progress:
                        progress(rec)
            records.extend(group)
            rows.append(MetricsRow.from_records(group, dataset_name, model_name, aggregation))

    sizes = np.bincount(labels[labels >= 0]) if (labels >= 0).any() else np.zeros(0)
    metadata = {
        "dataset": dataset_name,
        "model": model_name,
        "protocol": {**asdict(spec), "runs_per_strategy": len(pairs) * spec.repeats},
        "instances": [list(p) for p in pairs],
        "config": config.to_dict(),
        "shares": list(shares),
        "aggregation": aggregation,
        "denominators": {
            "exp_pct": "all runs",
            "score_time_count": "successful runs only (runs with at least one counterfactual)",
            "std": "population standard deviation (ddof=0)",
        },
        "cluster_cardinalities": [int(s) for s in sizes],
        "kernel_backend": kernels.BACKEND,
        "warnings": warnings,
    }
    if notes:
        metadata["notes"] = notes
    return BenchmarkResult(rows, records, metadata)


def emit_tables(rows: list[MetricsRow], csv_path=None) -> tuple[str, str]:
    """Render rows as CSV (fixed column order) and as an aligned text table."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_values())
    text_csv = buf.getvalue()
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text_csv)

    def pm(pair, digits=2):
        m, s = pair
        return "-" if m is None else f"{m:.{digits}f} ± {s:.{digits}f}"

    header = f"{'dataset':10s} {'model':7s} {'strategy':18s} {'share':>5s} {'Exp%':>6s} " \
             f"{'Score x':>13s} {'Score f':>13s} {'t first (s)':>13s} {'t best (s)':>13s} {'#CF':>15s}"
    lines = [header, "-" * len(header)]
    for r in rows:
        share = "-" if r.share is None else f"{100 * r.share:.0f}%"
        lines.append(f"{r.dataset:10s} {r.model:7s} {r.strategy:18s} {share:>5s} {r.exp_pct:6.1f} "
                     f"{pm(r.score_x):>13s} {pm(r.score_f):>13s} {pm(r.time_to_first):>13s} "
                     f"{pm(r.time_to_best):>13s} {pm(r.cf_count, 1):>15s}")
    return text_csv, "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[dict]:
    """Inverse of the CSV part of :func:`emit_tables`; empty cells become None."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in rec.items():
            if k in ("dataset", "model", "strategy"):
                row[k] = v
            else:
                row[k] = None if v == "" else float(v)
        out.append(row)
    return out


def compare_strategies(result: BenchmarkResult, a: str, b: str, aggregation: str = "best") -> dict:
    """Mean differences and Mann-Whitney p-values of per-run Sx and Sf."""
    ra = [r.per_run_scores(aggregation) for r in result.records_for(a) if r.found]
    rb = [r.per_run_scores(aggregation) for r in result.records_for(b) if r.found]
    if not ra or not rb:
        return {"comparable": False}
    out = {"comparable": True}
    for j, name in enumerate(("score_x", "score_f")):
        xa, xb = [p[j] for p in ra], [p[j] for p in rb]
        _, p = mann_whitney_u(xa, xb)
        out[name] = {"diff": abs(float(np.mean(xa)) - float(np.mean(xb))), "p": p}
    return out
