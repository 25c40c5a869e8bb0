"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from clustercf import _kernels_py as py

try:
    from clustercf import _ckernels as cy
except ImportError:
    cy = None


def cases(rng):
    A = rng.normal(size=(2000, 13))
    C = rng.normal(size=(3, 13))
    b = rng.normal(size=13)
    ranges = np.ones(13)
    is_cat = np.zeros(13, dtype=np.uint8)
    P = rng.normal(size=(300, 13))
    K = np.exp(-0.1 * py.sqdist(P, P))
    y = rng.integers(0, 3, 300).astype(np.int64)
    feats = np.arange(4, dtype=np.int64)
    thr = rng.normal(size=4)
    depth = 8
    n = 2 ** (depth + 1) - 1
    feature = np.where(np.arange(n) < 2 ** depth - 1, np.arange(n) % 13, -1).astype(np.int64)
    left = np.where(feature >= 0, 2 * np.arange(n) + 1, -1).astype(np.int64)
    right = np.where(feature >= 0, 2 * np.arange(n) + 2, -1).astype(np.int64)
    threshold = rng.normal(size=n)
    return {
        "gower_to (2000x13)": lambda m: m.gower_to(A, b, ranges, is_cat),
        "sqdist (2000x3)": lambda m: m.sqdist(A, C),
        "nearest_center (2000x3)": lambda m: m.nearest_center(A, C),
        "greedy_prototypes (300, m=60)": lambda m: m.greedy_prototypes(K, 60),
        "tree_apply (2000 rows, depth 8)": lambda m: m.tree_apply(feature, threshold, left, right, A),
        "best_split (300 rows, 4 feats)": lambda m: m.best_split(P, y, feats, thr, 3),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if cy is None:
        print("compiled extension not built; only the Python backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'python (ms)':>12s} {'cython (ms)':>12s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        tp = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if cy is None:
            print(f"{name:34s} {tp:12.3f} {'-':>12s} {'-':>8s}")
            continue
        tc = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:34s} {tp:12.3f} {tc:12.3f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
