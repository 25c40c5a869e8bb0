"""Fitted clustering models with a uniform assign/summary interface.

Models live in the encoded numeric space produced by
:class:`clustercf.dataspace.FeatureEncoder`. Two adapters ship here:
k-means++ (nearest-centroid assignment) and DBSCAN (nearest core sample
within ``eps``, otherwise :data:`NOISE`).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from clustercf import kernels

logger = logging.getLogger(__name__)

NOISE = -1


class ContractViolation(ValueError):
    pass


@dataclass(frozen=True)
class ClusterSummary:
    cluster_id: int
    centroid: np.ndarray
    min_dist: float
    max_dist: float
    cardinality: int

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "centroid": [float(v) for v in self.centroid],
            "min_dist": self.min_dist,
            "max_dist": self.max_dist,
            "cardinality": self.cardinality,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterSummary":
        return cls(int(d["cluster_id"]), np.asarray(d["centroid"], dtype=np.float64),
                   float(d["min_dist"]), float(d["max_dist"]), int(d["cardinality"]))


def euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean distance between ``a`` (n, d) and a single point ``b``."""
    a = np.atleast_2d(a)
    return np.sqrt(kernels.sqdist(a, np.asarray(b, dtype=np.float64)[None, :])[:, 0])


class ClusterModel:
    """Common surface of fitted clustering models."""

    algorithm = "base"
    metric = "euclidean"
    dim: int

    @property
    def num_clusters(self) -> int:
        return len(self.cluster_ids)

    @property
    def cluster_ids(self) -> list[int]:
        raise NotImplementedError

    def assign_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def assign(self, x) -> int:
        return int(self.assign_batch(np.asarray(x, dtype=np.float64)[None, :])[0])

    def summaries(self) -> list[ClusterSummary]:
        return list(self._summaries)

    def summary(self, cluster_id: int) -> ClusterSummary:
        for s in self._summaries:
            if s.cluster_id == cluster_id:
                return s
        raise KeyError(cluster_id)

    def _check_dim(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ContractViolation(f"expected {self.dim} features, got {X.shape[1]}")
        return X


@dataclass
class KMeansModel(ClusterModel):
    k: int
    centroids: np.ndarray
    seed: int
    inertia: float
    labels: np.ndarray = field(repr=False)
    n_iter: int = 0
    inertia_history: list = field(default_factory=list, repr=False)
    _summaries: list = field(default_factory=list, repr=False)

    algorithm = "kmeans"

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @property
    def cluster_ids(self) -> list[int]:
        return [s.cluster_id for s in self._summaries] if self._summaries else list(range(self.k))

    def assign_batch(self, X):
        X = self._check_dim(X)
        labels, _ = kernels.nearest_center(X, self.centroids)
        return labels


@dataclass
class DbscanModel(ClusterModel):
    eps: float
    min_pts: int
    core_samples: np.ndarray
    core_labels: np.ndarray
    labels: np.ndarray = field(repr=False)
    _summaries: list = field(default_factory=list, repr=False)

    algorithm = "dbscan"

    @property
    def dim(self) -> int:
        return self.core_samples.shape[1]

    @property
    def cluster_ids(self) -> list[int]:
        return [s.cluster_id for s in self._summaries]

    def assign_batch(self, X):
        X = self._check_dim(X)
        if len(self.core_samples) == 0:
            return np.full(X.shape[0], NOISE, dtype=np.int64)
        idx, d2 = kernels.nearest_center(X, self.core_samples)
        out = self.core_labels[idx].astype(np.int64)
        out[d2 > self.eps ** 2] = NOISE
        return out


def assign(model: ClusterModel, x) -> int:
    """Cluster id for one encoded instance (NOISE for DBSCAN outliers)."""
    return model.assign(x)


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = kernels.sqdist(X, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every point already sits on a center
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, kernels.sqdist(X, X[idx][None, :])[:, 0])
    return np.array(centers)


def _lloyd(X: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float):
    k = len(centroids)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        labels, d2 = kernels.nearest_center(X, centroids)
        history.append(float(d2.sum()))
        new = np.empty_like(centroids)
        for c in range(k):
            members = labels == c
            if members.any():
                new[c] = X[members].mean(axis=0)
            else:
                far = int(np.argmax(d2))
                new[c] = X[far]
                d2[far] = 0.0
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol:
            break
    labels, d2 = kernels.nearest_center(X, centroids)
    history.append(float(d2.sum()))
    return centroids, labels, float(d2.sum()), it, history


def kmeans_fit(data: np.ndarray, k: int, seed: int = 0, max_iter: int = 300,
               tol: float = 1e-6, n_init: int = 10) -> KMeansModel:
    """k-means with k-means++ seeding and Lloyd iterations.

    Each of the ``n_init`` restarts stops once no centroid moves more than
    ``tol`` or after ``max_iter`` iterations; the restart with the lowest
    inertia is kept. An emptied cluster is re-seeded at the point currently
    farthest from its centroid.
    """
    X = np.ascontiguousarray(data, dtype=np.float64)
    n = X.shape[0]
    if k < 1 or k > n:
        raise ContractViolation(f"need 1 <= k <= n, got k={k}, n={n}")
    if n_init < 1:
        raise ContractViolation("n_init must be >= 1")
    best = None
    for child in np.random.SeedSequence(seed).spawn(n_init):
        rng = np.random.default_rng(child)
        fit = _lloyd(X, _kmeanspp_init(X, k, rng), max_iter, tol)
        if best is None or fit[2] < best[2]:
            best = fit
    centroids, labels, inertia, it, history = best
    model = KMeansModel(k=k, centroids=centroids, seed=seed, inertia=inertia,
                        labels=labels, n_iter=it, inertia_history=history)
    model._summaries, _ = cluster_summaries(model, X)
    return model


def dbscan_fit(data: np.ndarray, eps: float, min_pts: int) -> DbscanModel:
    """Classical DBSCAN; a point's neighbourhood includes the point itself.

    Clusters are numbered in order of their first core point, so the result
    is deterministic for a fixed row order.
    """
    if eps <= 0 or min_pts < 1:
        raise ContractViolation("eps must be > 0 and min_pts >= 1")
    X = np.ascontiguousarray(data, dtype=np.float64)
    n = X.shape[0]
    adjacency = kernels.sqdist(X, X) <= eps ** 2
    neighbors = [np.flatnonzero(row) for row in adjacency]
    is_core = np.array([len(nb) >= min_pts for nb in neighbors], dtype=bool)
    labels = np.full(n, NOISE, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not is_core[i]:
            continue
        labels[i] = cluster
        stack = [i]
        while stack:
            p = stack.pop()
            if not is_core[p]:
                continue
            for q in neighbors[p]:
                if labels[q] == NOISE:
                    labels[q] = cluster
                    stack.append(q)
        cluster += 1
    core_idx = np.flatnonzero(is_core)
    model = DbscanModel(eps=float(eps), min_pts=int(min_pts), core_samples=X[core_idx].copy(),
                        core_labels=labels[core_idx].copy(), labels=labels)
    model._summaries, _ = cluster_summaries(model, X)
    return model


def cluster_summaries(model: ClusterModel, data: np.ndarray) -> tuple[list[ClusterSummary], list[str]]:
    """Centroid and min/max member-to-centroid distance for every cluster.

    Returns ``(summaries, warnings)``. Empty clusters are left out and noted in
    ``warnings``. DBSCAN centroids are member means.
    """
    X = np.asarray(data, dtype=np.float64)
    labels = model.assign_batch(X) if isinstance(model, KMeansModel) else model.labels
    if isinstance(model, KMeansModel):
        ids = range(model.k)
    else:
        ids = sorted(int(c) for c in set(labels.tolist()) if c != NOISE)
    out, warnings = [], []
    for c in ids:
        members = X[labels == c]
        if len(members) == 0:
            msg = f"cluster {c} is empty; excluded from summaries"
            logger.warning(msg)
            warnings.append(msg)
            continue
        centroid = model.centroids[c] if isinstance(model, KMeansModel) else members.mean(axis=0)
        d = euclidean(members, centroid)
        out.append(ClusterSummary(int(c), np.array(centroid, dtype=np.float64),
                                  float(d.min()), float(d.max()), int(len(members))))
    return out, warnings


def cardinalities(model: ClusterModel) -> dict[int, int]:
    return {s.cluster_id: s.cardinality for s in model.summaries()}


def model_to_dict(model: ClusterModel) -> dict:
    doc = {
        "algorithm": model.algorithm,
        "metric": model.metric,
        "summaries": [s.to_dict() for s in model.summaries()],
        "dim": model.dim,
        "labels": [int(v) for v in model.labels],
    }
    if isinstance(model, KMeansModel):
        doc["params"] = {"k": model.k, "seed": model.seed}
        doc["centroids"] = model.centroids.tolist()
        doc["inertia"] = model.inertia
        doc["n_iter"] = model.n_iter
    else:
        doc["params"] = {"eps": model.eps, "min_pts": model.min_pts}
        doc["core_samples"] = model.core_samples.tolist()
        doc["core_labels"] = [int(v) for v in model.core_labels]
        doc["noise_count"] = int((model.labels == NOISE).sum())
    return doc


def model_from_dict(doc: dict) -> ClusterModel:
    summaries = [ClusterSummary.from_dict(s) for s in doc["summaries"]]
    labels = np.asarray(doc["labels"], dtype=np.int64)
    if doc["algorithm"] == "kmeans":
        model = KMeansModel(k=int(doc["params"]["k"]), centroids=np.asarray(doc["centroids"], dtype=np.float64),
                            seed=int(doc["params"]["seed"]), inertia=float(doc["inertia"]),
                            labels=labels, n_iter=int(doc.get("n_iter", 0)))
    elif doc["algorithm"] == "dbscan":
        core = np.asarray(doc["core_samples"], dtype=np.float64).reshape(-1, int(doc["dim"]))
        model = DbscanModel(eps=float(doc["params"]["eps"]), min_pts=int(doc["params"]["min_pts"]),
                            core_samples=core, core_labels=np.asarray(doc["core_labels"], dtype=np.int64),
                            labels=labels)
    else:
        raise ValueError(f"unknown algorithm {doc['algorithm']!r}")
    model._summaries = summaries
    return model


def save_model(model: ClusterModel, path, extra: dict | None = None) -> None:
    doc = model_to_dict(model)
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def load_model(path) -> tuple[ClusterModel, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return model_from_dict(doc), doc
