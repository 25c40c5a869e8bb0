"""Counterfactual objective: feature sparsity x feature similarity x output score.

The output-space score ``s_y`` comes from one of three strategies:

* :class:`HardSy` -- 1 if the model assigns the target cluster, else 0.
* :class:`CentroidDistanceSy` -- distance to the target centroid rescaled by
  the cluster's min/max member distance and clipped to [0, 1].
* :class:`MembershipSy` -- target-cluster probability from any provider
  exposing ``predict_proba``.

Strategies score *encoded* vectors (the space the model was fitted in).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from clustercf.clustering import ClusterModel, ClusterSummary, ContractViolation, NOISE, euclidean
from clustercf.dataspace import FeatureEncoder, FeatureSchema, gower_codes


@dataclass(frozen=True)
class ScoreBreakdown:
    s_f: float
    s_x: float
    s_y: float
    total: float

    def to_dict(self) -> dict:
        return {"s_f": self.s_f, "s_x": self.s_x, "s_y": self.s_y, "total": self.total}


def score_f_codes(C: np.ndarray, origin: np.ndarray) -> np.ndarray:
    C = np.atleast_2d(C)
    return (C == origin).sum(axis=1) / C.shape[1]


def score_x_codes(C: np.ndarray, origin: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    return 1.0 - gower_codes(C, origin, schema)


def score_f(candidate: Sequence, origin: Sequence, schema: FeatureSchema | None = None) -> float:
    """Share of features left exactly unchanged."""
    if len(candidate) != len(origin):
        raise ContractViolation("candidate and origin differ in length")
    if schema is not None:
        return float(score_f_codes(schema.to_codes(candidate)[None, :], schema.to_codes(origin))[0])
    return sum(a == b for a, b in zip(candidate, origin)) / len(origin)


def score_x(candidate: Sequence, origin: Sequence, schema: FeatureSchema) -> float:
    return float(score_x_codes(schema.to_codes(candidate)[None, :], schema.to_codes(origin), schema)[0])


class SyStrategy:
    name = "base"

    def score_batch(self, X: np.ndarray, target: int) -> np.ndarray:
        raise NotImplementedError

    def score(self, x: np.ndarray, target: int) -> float:
        return float(self.score_batch(np.asarray(x, dtype=np.float64)[None, :], target)[0])


class HardSy(SyStrategy):
    name = "hard"

    def __init__(self, model: ClusterModel):
        self.model = model

    def score_batch(self, X, target):
        return (self.model.assign_batch(X) == target).astype(np.float64)


def rescale_distance(d: np.ndarray, min_dist: float, max_dist: float) -> np.ndarray:
    """``1 - (d - min) / (max - min)`` clipped to [0, 1].

    With ``max == min`` this degenerates to a step: 1 inside ``min``, 0 outside.
    """
    d = np.asarray(d, dtype=np.float64)
    if max_dist <= min_dist:
        return (d <= min_dist).astype(np.float64)
    return np.clip(1.0 - (d - min_dist) / (max_dist - min_dist), 0.0, 1.0)


class CentroidDistanceSy(SyStrategy):
    name = "centroid_distance"

    def __init__(self, summaries: Sequence[ClusterSummary], metric=euclidean):
        self.summaries = {s.cluster_id: s for s in summaries}
        self.metric = metric

    @classmethod
    def from_model(cls, model: ClusterModel) -> "CentroidDistanceSy":
        return cls(model.summaries())

    def score_batch(self, X, target):
        s = self.summaries[target]
        return rescale_distance(self.metric(np.atleast_2d(X), s.centroid), s.min_dist, s.max_dist)


class MembershipProvider(Protocol):
    classes: Sequence[int]

    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...


def _check_proba(P: np.ndarray) -> None:
    if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-6):
        raise ContractViolation("membership probabilities do not sum to 1")


class MembershipSy(SyStrategy):
    """Target-cluster probability from a membership provider.

    A candidate the real model calls NOISE still gets the provider's
    probability here; validity is checked against the model elsewhere.
    """

    name = "membership"

    def __init__(self, provider: MembershipProvider):
        self.provider = provider

    def score_batch(self, X, target):
        P = np.asarray(self.provider.predict_proba(np.atleast_2d(X)), dtype=np.float64)
        _check_proba(P)
        classes = list(self.provider.classes)
        if target not in classes:
            return np.zeros(P.shape[0])
        return P[:, classes.index(target)]


def sy_hard(candidate: np.ndarray, target: int, model: ClusterModel) -> float:
    if target == NOISE:
        return 0.0
    return float(model.assign(candidate) == target)


def sy_centroid_distance(candidate: np.ndarray, target: int, summary: ClusterSummary,
                         metric=euclidean) -> float:
    if summary.cluster_id != target:
        raise ContractViolation(f"summary for cluster {summary.cluster_id}, target {target}")
    d = metric(np.atleast_2d(np.asarray(candidate, dtype=np.float64)), summary.centroid)
    return float(rescale_distance(d, summary.min_dist, summary.max_dist)[0])


def sy_membership(probabilities: Sequence[float], target: int,
                  classes: Sequence[int] | None = None) -> float:
    """Target component of a probability vector over clusters."""
    P = np.asarray(probabilities, dtype=np.float64)[None, :]
    _check_proba(P)
    idx = list(classes).index(target) if classes is not None else target
    return float(P[0, idx])


def combine(s_f, s_x, s_y):
    return np.asarray(s_f) * np.asarray(s_x) * np.asarray(s_y)


def score_codes(C: np.ndarray, origin: np.ndarray, target: int, sy: SyStrategy,
                schema: FeatureSchema, encoder: FeatureEncoder, encoded: np.ndarray | None = None):
    """Vectorized objective for a batch of code rows.

    Returns ``(s_f, s_x, s_y, total)`` arrays.
    """
    C = np.atleast_2d(C)
    if encoded is None:
        encoded = encoder.encode(C)
    s_f = score_f_codes(C, origin)
    s_x = score_x_codes(C, origin, schema)
    s_y = sy.score_batch(encoded, target)
    return s_f, s_x, s_y, combine(s_f, s_x, s_y)


def total_score(candidate: Sequence, origin: Sequence, target: int, sy: SyStrategy,
                schema: FeatureSchema, encoder: FeatureEncoder) -> ScoreBreakdown:
    c = schema.to_codes(candidate)[None, :]
    o = schema.to_codes(origin)
    s_f, s_x, s_y, total = score_codes(c, o, target, sy, schema, encoder)
    return ScoreBreakdown(float(s_f[0]), float(s_x[0]), float(s_y[0]), float(total[0]))
