# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()

ctypedef cnp.int64_t i64

cdef double TIE_TOL = 1e-12


def gower_to(A, b, ranges, is_cat):
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[::1] r = np.ascontiguousarray(ranges, dtype=np.float64)
    cdef const cnp.uint8_t[::1] cat = np.ascontiguousarray(is_cat, dtype=np.uint8)
    cdef Py_ssize_t n = a.shape[0], d = a.shape[1], i, j
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double acc, diff, t
    if d == 0:
        return out_arr
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(d):
                diff = fabs(a[i, j] - bv[j])
                if cat[j]:
                    if diff != 0.0:
                        acc += 1.0
                elif r[j] > 0.0:
                    t = diff / r[j]
                    acc += t if t < 1.0 else 1.0
            out[i] = acc / d
    return out_arr


def sqdist(A, B):
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], d = a.shape[1], i, j, k
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double acc, t
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    t = a[i, k] - b[j, k]
                    acc += t * t
                out[i, j] = acc
    return out_arr


def nearest_center(A, C):
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = c.shape[0], d = a.shape[1], i, j, k
    labels_arr = np.zeros(n, dtype=np.int64)
    dist_arr = np.zeros(n, dtype=np.float64)
    cdef i64[::1] labels = labels_arr
    cdef double[::1] dist = dist_arr
    cdef double acc, t, best
    cdef i64 arg
    with nogil:
        for i in range(n):
            best = INFINITY
            arg = 0
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    t = a[i, k] - c[j, k]
                    acc += t * t
                if acc < best:
                    best = acc
                    arg = j
            labels[i] = arg
            dist[i] = best
    return labels_arr, dist_arr


def greedy_prototypes(K, Py_ssize_t m):
    cdef const double[:, ::1] k = np.ascontiguousarray(K, dtype=np.float64)
    cdef Py_ssize_t n = k.shape[0], i, s, c
    colmean_arr = np.asarray(K, dtype=np.float64).mean(axis=1)
    cdef double[::1] colmean = colmean_arr
    cdef double const = colmean_arr.mean()
    cdef double[::1] v = np.zeros(n, dtype=np.float64)
    cdef double[::1] obj = np.empty(n, dtype=np.float64)
    cdef cnp.uint8_t[::1] chosen = np.zeros(n, dtype=np.uint8)
    out_arr = np.empty(m, dtype=np.int64)
    cdef i64[::1] out = out_arr
    cdef double sum_ss = 0.0, sum_col = 0.0, best, denom
    with nogil:
        for s in range(m):
            denom = <double>(s + 1)
            best = INFINITY
            for i in range(n):
                if chosen[i]:
                    obj[i] = INFINITY
                    continue
                obj[i] = ((sum_ss + 2.0 * v[i] + k[i, i]) / (denom * denom)
                          - 2.0 * (sum_col + colmean[i]) / denom + const)
                if obj[i] < best:
                    best = obj[i]
            c = 0
            for i in range(n):
                if obj[i] <= best + TIE_TOL:
                    c = i
                    break
            out[s] = c
            chosen[c] = 1
            sum_ss += 2.0 * v[c] + k[c, c]
            sum_col += colmean[c]
            for i in range(n):
                v[i] += k[i, c]
    return out_arr


def tree_apply(feature, threshold, left, right, X):
    cdef const i64[::1] f = np.ascontiguousarray(feature, dtype=np.int64)
    cdef const double[::1] t = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const i64[::1] lft = np.ascontiguousarray(left, dtype=np.int64)
    cdef const i64[::1] rgt = np.ascontiguousarray(right, dtype=np.int64)
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], i
    out_arr = np.zeros(n, dtype=np.int64)
    cdef i64[::1] out = out_arr
    cdef i64 node
    with nogil:
        for i in range(n):
            node = 0
            while f[node] >= 0:
                if x[i, f[node]] <= t[node]:
                    node = lft[node]
                else:
                    node = rgt[node]
            out[i] = node
    return out_arr


def best_split(X, y, feats, thresholds, Py_ssize_t n_classes):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const i64[::1] yy = np.ascontiguousarray(y, dtype=np.int64)
    cdef const i64[::1] fs = np.ascontiguousarray(feats, dtype=np.int64)
    cdef const double[::1] ts = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], p, i, c
    cdef double[::1] cl = np.zeros(n_classes, dtype=np.float64)
    cdef double[::1] cr = np.zeros(n_classes, dtype=np.float64)
    cdef Py_ssize_t best_pos = -1, nl, nr
    cdef double best_imp = INFINITY, gl, gr, imp
    with nogil:
        for p in range(fs.shape[0]):
            for c in range(n_classes):
                cl[c] = 0.0
                cr[c] = 0.0
            nl = 0
            for i in range(n):
                if x[i, fs[p]] <= ts[p]:
                    cl[yy[i]] += 1.0
                    nl += 1
                else:
                    cr[yy[i]] += 1.0
            nr = n - nl
            if nl == 0 or nr == 0:
                continue
            gl = 1.0
            gr = 1.0
            for c in range(n_classes):
                gl -= (cl[c] / nl) * (cl[c] / nl)
                gr -= (cr[c] / nr) * (cr[c] / nr)
            imp = (nl * gl + nr * gr) / n
            if imp < best_imp - TIE_TOL:
                best_pos = p
                best_imp = imp
    return best_pos, best_imp
