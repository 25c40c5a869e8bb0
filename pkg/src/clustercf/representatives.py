"""MMD-critic prototypes and criticisms, selected separately for each cluster."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from clustercf import kernels
from clustercf.clustering import ClusterModel, NOISE

logger = logging.getLogger(__name__)

CRITICISM_SHARE = 0.2  # 1 criticism per 4 prototypes


@dataclass(frozen=True)
class KernelSpec:
    gamma: float
    kind: str = "rbf"

    def __post_init__(self):
        if self.kind != "rbf":
            raise ValueError("only the rbf kernel is supported")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def matrix(self, A, B) -> np.ndarray:
        return rbf_matrix(A, B, self.gamma)


def rbf_kernel(a, b, gamma: float) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("vectors differ in dimension")
    return float(np.exp(-gamma * np.sum((a - b) ** 2)))


def rbf_matrix(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    return np.exp(-gamma * kernels.sqdist(A, B))


def median_heuristic(X, max_points: int = 500, seed: int = 0) -> KernelSpec:
    """gamma = 1 / (2 median^2) over pairwise distances of up to ``max_points`` rows."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) > max_points:
        X = X[np.sort(np.random.default_rng(seed).choice(len(X), max_points, replace=False))]
    d = np.sqrt(kernels.sqdist(X, X)[np.triu_indices(len(X), 1)])
    med = float(np.median(d)) if d.size else 0.0
    if med <= 0:
        med = 1.0
    return KernelSpec(gamma=1.0 / (2.0 * med ** 2))


def mmd_squared(Z, X, kernel: KernelSpec) -> float:
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return float(kernel.matrix(Z, Z).mean() - 2.0 * kernel.matrix(Z, X).mean() + kernel.matrix(X, X).mean())


def witness(x, X, Z, kernel: KernelSpec) -> np.ndarray | float:
    """Mean kernel similarity to the data minus mean similarity to the prototypes.

    ``x`` may be one point or a matrix of query points.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    Q = np.atleast_2d(x)
    w = kernel.matrix(Q, X).mean(axis=1) - kernel.matrix(Q, Z).mean(axis=1)
    return float(w[0]) if single else w


def select_prototypes(points, m: int, kernel: KernelSpec) -> list[int]:
    """Greedy MMD minimization: each step adds the point that lowers MMD^2 most."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = len(points)
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got {m}")
    K = kernel.matrix(points, points)
    return [int(i) for i in kernels.greedy_prototypes(K, m)]


def select_criticisms(points, prototypes: list[int], c: int, kernel: KernelSpec,
                      warnings: list | None = None) -> list[int]:
    """The ``c`` non-prototype points with the largest ``|witness|``; ties go low."""
    if c < 0:
        raise ValueError("c must be >= 0")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    taken = set(prototypes)
    pool = np.array([i for i in range(len(points)) if i not in taken], dtype=np.int64)
    if c > len(pool):
        msg = f"requested {c} criticisms but only {len(pool)} points available"
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)
        c = len(pool)
    if c == 0:
        return []
    w = witness(points[pool], points, points[list(prototypes)], kernel)
    # rounding makes numerically-equal magnitudes tie so the index rule applies
    order = np.lexsort((pool, -np.round(np.abs(w), 12)))
    return [int(pool[i]) for i in order[:c]]


def split_budget(cardinality: int, share: float) -> tuple[int, int]:
    """``(prototypes, criticisms)`` for a cluster of the given size."""
    budget = max(1, int(math.floor(share * cardinality + 0.5)))
    budget = min(budget, cardinality)
    protos = min(budget, math.ceil((1 - CRITICISM_SHARE) * budget - 1e-9))
    return protos, budget - protos


@dataclass
class ClusterRepresentatives:
    cluster_id: int
    prototypes: list[int]
    criticisms: list[int]

    @property
    def indices(self) -> list[int]:
        return self.prototypes + self.criticisms


@dataclass
class RepresentativeSet:
    """Per-cluster prototypes and criticisms, as row indices into the training data."""

    share: float
    gamma: float
    clusters: list[ClusterRepresentatives] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def indices_and_labels(self) -> tuple[np.ndarray, np.ndarray]:
        idx, lab = [], []
        for cr in self.clusters:
            idx += cr.indices
            lab += [cr.cluster_id] * len(cr.indices)
        return np.asarray(idx, dtype=np.int64), np.asarray(lab, dtype=np.int64)

    def __len__(self) -> int:
        return sum(len(cr.indices) for cr in self.clusters)

    def to_dict(self) -> dict:
        return {
            "share": self.share,
            "gamma": self.gamma,
            "criticism_ratio": "1:4",
            "clusters": [
                {"cluster_id": cr.cluster_id, "prototypes": cr.prototypes, "criticisms": cr.criticisms}
                for cr in self.clusters
            ],
            "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "RepresentativeSet":
        return cls(
            share=float(d["share"]),
            gamma=float(d["gamma"]),
            clusters=[ClusterRepresentatives(int(c["cluster_id"]), list(c["prototypes"]), list(c["criticisms"]))
                      for c in d["clusters"]],
            warnings=list(d.get("warnings", [])),
        )


def build_representative_set(data, labels, share: float = 0.2,
                             kernel: KernelSpec | None = None) -> RepresentativeSet:
    """Select representatives for every non-noise cluster in ``labels``.

    ``data`` is the encoded training matrix and ``labels`` the fitted model's
    assignment of each row. Returned indices refer to rows of ``data``.
    """
    if not 0 < share <= 1:
        raise ValueError("share must be in (0, 1]")
    X = np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels)
    if kernel is None:
        kernel = median_heuristic(X)
    out = RepresentativeSet(share=share, gamma=kernel.gamma)
    for c in sorted(int(v) for v in set(labels.tolist()) if v != NOISE):
        members = np.flatnonzero(labels == c)
        if len(members) == 0:
            continue
        n_proto, n_crit = split_budget(len(members), share)
        pts = X[members]
        protos = select_prototypes(pts, n_proto, kernel)
        crits = select_criticisms(pts, protos, n_crit, kernel, out.warnings)
        out.clusters.append(ClusterRepresentatives(
            c, [int(members[i]) for i in protos], [int(members[i]) for i in crits]))
    return out


def representatives_for_model(data, model: ClusterModel, share: float = 0.2,
                              kernel: KernelSpec | None = None) -> RepresentativeSet:
    X = np.asarray(data, dtype=np.float64)
    return build_representative_set(X, model.assign_batch(X) if model.algorithm == "kmeans" else model.labels,
                                     share, kernel)
