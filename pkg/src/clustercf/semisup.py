"""Self-training over an extremely randomized trees ensemble.

The ensemble is trained on labelled representatives, pseudo-labels confident
unlabelled points, and finally serves cluster-membership probabilities to
:class:`clustercf.scoring.MembershipSy`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from clustercf import kernels
from clustercf.clustering import ContractViolation


@dataclass
class ExtraTree:
    """Array-backed binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) class frequencies

    def apply(self, X):
        return kernels.tree_apply(self.feature, self.threshold, self.left, self.right, X)

    def predict_proba(self, X):
        return self.value[self.apply(X)]

    @property
    def node_count(self) -> int:
        return len(self.feature)


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, rng: np.random.Generator,
              max_features: int | None = None, min_split: int = 3) -> ExtraTree:
    """Grow one extra tree on all rows (no bootstrap).

    At every node ``max_features`` non-constant features are drawn, each gets a
    single uniform threshold in the node's value range, and the lowest weighted
    Gini wins. Nodes that are pure or hold fewer than ``min_split`` rows
    become leaves.
    """
    n, d = X.shape
    k = max_features or max(1, math.ceil(math.sqrt(d)))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts = np.bincount(y[rows], minlength=n_classes).astype(np.float64)
        value.append(counts / counts.sum())
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n))]
    while stack:
        node, rows = stack.pop()
        yr = y[rows]
        if len(rows) < min_split or np.all(yr == yr[0]):
            continue
        Xr = X[rows]
        lo, hi = Xr.min(axis=0), Xr.max(axis=0)
        varying = np.flatnonzero(hi > lo)
        if len(varying) == 0:
            continue
        feats = rng.permutation(varying)[:k]
        thr = rng.uniform(lo[feats], hi[feats])
        pos, _ = kernels.best_split(Xr, yr, feats, thr, n_classes)
        if pos < 0:
            continue
        f, t = int(feats[pos]), float(thr[pos])
        go_left = Xr[:, f] <= t
        feature[node], threshold[node] = f, t
        li = new_node(rows[go_left])
        ri = new_node(rows[~go_left])
        left[node], right[node] = li, ri
        stack.append((ri, rows[~go_left]))
        stack.append((li, rows[go_left]))
    return ExtraTree(np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=np.float64),
                     np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
                     np.asarray(value, dtype=np.float64))


@dataclass
class TreeEnsembleClassifier:
    classes: list[int]
    num_trees: int
    seed: int
    trees: list[ExtraTree] = field(default_factory=list, repr=False)
    dim: int = 0

    def predict_proba(self, X) -> np.ndarray:
        """Average of the trees' leaf class frequencies; rows sum to 1."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ContractViolation(f"expected {self.dim} features, got {X.shape[1]}")
        X = np.ascontiguousarray(X)
        P = np.zeros((X.shape[0], len(self.classes)))
        for tree in self.trees:
            P += tree.predict_proba(X)
        return P / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.classes)[np.argmax(self.predict_proba(X), axis=1)]


def fit_ensemble(X, y, num_trees: int = 100, seed: int = 0) -> TreeEnsembleClassifier:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise ContractViolation("fit_ensemble needs a non-empty labelled matrix")
    classes = sorted(int(c) for c in set(y.tolist()))
    yi = np.searchsorted(classes, y).astype(np.int64)
    trees = []
    for child in np.random.SeedSequence(seed).spawn(num_trees):
        trees.append(grow_tree(X, yi, len(classes), np.random.default_rng(child)))
    return TreeEnsembleClassifier(classes, num_trees, seed, trees, X.shape[1])


@dataclass
class SelfTrainingModel:
    base: TreeEnsembleClassifier
    threshold: float
    max_rounds: int
    pseudo_label_log: list[int]
    labels: np.ndarray = field(repr=False)  # -1 marks still-unlabelled rows
    n_seeds: int = 0

    @property
    def classes(self) -> list[int]:
        return self.base.classes

    def predict_proba(self, X) -> np.ndarray:
        return self.base.predict_proba(X)


def self_train(X_labeled, y_labeled, X_unlabeled=None, threshold: float = 0.75,
               max_rounds: int = 10, num_trees: int = 100, seed: int = 0) -> SelfTrainingModel:
    """Iteratively pseudo-label unlabelled rows whose top probability reaches ``threshold``.

    Stops when a round adds nothing or after ``max_rounds`` rounds; the
    ensemble is refitted on the final pool when the last round grew it.
    Seeds keep their original labels throughout.
    """
    if not 0.5 < threshold <= 1.0:
        raise ValueError("threshold must be in (0.5, 1]")
    XL = np.asarray(X_labeled, dtype=np.float64)
    yL = np.asarray(y_labeled, dtype=np.int64)
    if len(XL) == 0:
        raise ContractViolation("self_train needs at least one labelled row")
    XU = np.zeros((0, XL.shape[1])) if X_unlabeled is None else np.asarray(X_unlabeled, dtype=np.float64)
    X = np.vstack([XL, XU])
    labels = np.concatenate([yL, np.full(len(XU), -1, dtype=np.int64)])
    log = []
    model = None
    stale = True
    for _ in range(max(1, max_rounds)):
        have = labels >= 0
        model = fit_ensemble(X[have], labels[have], num_trees, seed)
        stale = False
        pending = np.flatnonzero(~have)
        if len(pending) == 0:
            log.append(0)
            break
        P = model.predict_proba(X[pending])
        confident = P.max(axis=1) >= threshold
        log.append(int(confident.sum()))
        if not confident.any():
            break
        labels[pending[confident]] = np.asarray(model.classes)[np.argmax(P[confident], axis=1)]
        stale = True
    if stale:
        have = labels >= 0
        model = fit_ensemble(X[have], labels[have], num_trees, seed)
    return SelfTrainingModel(model, threshold, max_rounds, log, labels, len(XL))


def membership_probabilities(model: SelfTrainingModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return model.predict_proba(x[None, :])[0]
    return model.predict_proba(x)


class MembershipModel:
    """Probability provider over a fixed list of cluster ids.

    Clusters with no labelled rows get probability 0.
    """

    def __init__(self, stc: SelfTrainingModel, cluster_ids: list[int]):
        self.stc = stc
        self.classes = list(cluster_ids)
        self._cols = [self.classes.index(c) for c in stc.classes]

    def predict_proba(self, X) -> np.ndarray:
        P = self.stc.predict_proba(X)
        out = np.zeros((P.shape[0], len(self.classes)))
        out[:, self._cols] = P
        return out
