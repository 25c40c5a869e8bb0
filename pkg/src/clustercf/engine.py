"""Wiring: dataset + encoder + fitted model + guard + Sy strategies."""
from __future__ import annotations

import logging

import numpy as np

from clustercf.clustering import ClusterModel, dbscan_fit, kmeans_fit
from clustercf.dataspace import Dataset, FeatureEncoder
from clustercf.representatives import RepresentativeSet, median_heuristic, representatives_for_model
from clustercf.scoring import CentroidDistanceSy, HardSy, MembershipSy, SyStrategy
from clustercf.search import OutlierGuard, SearchConfig, SearchResult, explain
from clustercf.semisup import MembershipModel, self_train

logger = logging.getLogger(__name__)


def fit_model(dataset: Dataset, algo: str = "kmeans", *, k: int = 3, seed: int = 0,
              eps: float = 0.5, min_pts: int = 5, standardize: bool = True
              ) -> tuple[FeatureEncoder, ClusterModel]:
    encoder = FeatureEncoder.fit(dataset, standardize=standardize)
    X = encoder.encode(dataset.codes)
    if algo == "kmeans":
        model = kmeans_fit(X, k, seed)
    elif algo == "dbscan":
        model = dbscan_fit(X, eps, min_pts)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    return encoder, model


def build_membership(X: np.ndarray, model: ClusterModel, config: SearchConfig
                     ) -> tuple[MembershipModel, RepresentativeSet]:
    """Representatives -> self-training -> probability provider over the model's clusters."""
    labels = model.assign_batch(X) if model.algorithm == "kmeans" else model.labels
    reps = representatives_for_model(X, model, config.share, median_heuristic(X))
    idx, lab = reps.indices_and_labels()
    rest = np.setdiff1d(np.arange(len(X)), idx)
    # noise rows stay out of the unlabelled pool as well
    rest = rest[labels[rest] >= 0]
    stc = self_train(X[idx], lab, X[rest], threshold=config.stc_threshold,
                     max_rounds=config.stc_max_rounds, num_trees=config.stc_trees, seed=config.rng_seed)
    return MembershipModel(stc, model.cluster_ids), reps


class Explainer:
    """Holds the immutable fitted state shared by many searches."""

    def __init__(self, dataset: Dataset, encoder: FeatureEncoder, model: ClusterModel,
                 guard_enabled: bool = True, guard_seed: int = 0):
        self.dataset = dataset
        self.encoder = encoder
        self.model = model
        self.X = encoder.encode(dataset.codes)
        self.guard = OutlierGuard(self.X, seed=guard_seed, enabled=guard_enabled)
        self.representatives: dict[float, RepresentativeSet] = {}
        self._membership: dict[tuple, MembershipModel] = {}

    def strategy(self, config: SearchConfig) -> SyStrategy:
        if config.sy_strategy == "hard":
            return HardSy(self.model)
        if config.sy_strategy == "centroid_distance":
            return CentroidDistanceSy.from_model(self.model)
        key = (config.share, config.stc_threshold, config.stc_max_rounds, config.stc_trees, config.rng_seed)
        if key not in self._membership:
            provider, reps = build_membership(self.X, self.model, config)
            self._membership[key] = provider
            self.representatives[config.share] = reps
        return MembershipSy(self._membership[key])

    def explain(self, origin, target: int, config: SearchConfig, sy: SyStrategy | None = None) -> SearchResult:
        sy = sy or self.strategy(config)
        return explain(origin, target, self.model, sy, config, schema=self.dataset.schema,
                       encoder=self.encoder, guard=self.guard if config.outlier_guard_enabled else None)

    def assign_row(self, index: int) -> int:
        return self.model.assign(self.X[index])
