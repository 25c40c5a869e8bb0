"""Pure numpy versions of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Both must return identical results (up to float rounding) so the backend can
be swapped at import time.
"""
import numpy as np

TIE_TOL = 1e-12


def gower_to(A, b, ranges, is_cat):
    """Gower distance from every row of ``A`` to the single vector ``b``.

    ``A`` and ``b`` hold numeric values and integer category codes side by
    side. ``ranges`` is the frozen training range per feature (ignored for
    categorical columns); a zero range contributes nothing.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ranges = np.asarray(ranges, dtype=np.float64)
    cat = np.asarray(is_cat, dtype=bool)
    d = A.shape[1]
    if d == 0:
        return np.zeros(A.shape[0])
    diff = np.abs(A - b)
    per = np.zeros_like(diff)
    num = ~cat & (ranges > 0)
    per[:, num] = np.minimum(diff[:, num] / ranges[num], 1.0)
    per[:, cat] = (diff[:, cat] != 0).astype(np.float64)
    return per.sum(axis=1) / d


def sqdist(A, B):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    # explicit differences keep exact zeros for identical rows
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def nearest_center(A, C):
    """Index of the closest row of ``C`` for each row of ``A``; ties go low."""
    d2 = sqdist(A, C)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, d2[np.arange(d2.shape[0]), labels]


def greedy_prototypes(K, m):
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    colmean = K.mean(axis=1)
    const = colmean.mean()
    diag = np.diag(K).copy()
    v = np.zeros(n)
    chosen = np.zeros(n, dtype=bool)
    sum_ss = 0.0
    sum_col = 0.0
    out = np.empty(m, dtype=np.int64)
    for s in range(m):
        obj = (sum_ss + 2.0 * v + diag) / (s + 1) ** 2 - 2.0 * (sum_col + colmean) / (s + 1) + const
        obj[chosen] = np.inf
        best = obj.min()
        c = int(np.flatnonzero(obj <= best + TIE_TOL)[0])
        out[s] = c
        chosen[c] = True
        sum_ss += 2.0 * v[c] + diag[c]
        sum_col += colmean[c]
        v += K[:, c]
    return out


def tree_apply(feature, threshold, left, right, X):
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        idx = rows[active]
        nd = node[idx]
        go_left = X[idx, feature[nd]] <= threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node


def best_split(X, y, feats, thresholds, n_classes):
    """Pick the candidate (feature, threshold) pair with the lowest weighted Gini.

    Returns ``(position, impurity)``; position is -1 when no candidate splits
    the node into two non-empty sides. Ties keep the earliest candidate.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    best_pos, best_imp = -1, np.inf
    for pos in range(len(feats)):
        go_left = X[:, feats[pos]] <= thresholds[pos]
        nl = int(go_left.sum())
        nr = n - nl
        if nl == 0 or nr == 0:
            continue
        cl = np.bincount(y[go_left], minlength=n_classes).astype(np.float64)
        cr = np.bincount(y[~go_left], minlength=n_classes).astype(np.float64)
        gl = 1.0 - np.sum((cl / nl) ** 2)
        gr = 1.0 - np.sum((cr / nr) ** 2)
        imp = (nl * gl + nr * gr) / n
        if imp < best_imp - TIE_TOL:
            best_pos, best_imp = pos, imp
    return best_pos, best_imp
