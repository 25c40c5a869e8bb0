"""Backend selection for the hot kernels.

The compiled module is used when it imports; otherwise the numpy fallback.
Set ``CLUSTERCF_PURE_PYTHON=1`` to force the fallback.
"""
import os

from clustercf import _kernels_py

if os.environ.get("CLUSTERCF_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from clustercf import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

gower_to = _impl.gower_to
sqdist = _impl.sqdist
nearest_center = _impl.nearest_center
greedy_prototypes = _impl.greedy_prototypes
tree_apply = _impl.tree_apply
best_split = _impl.best_split

__all__ = [
    "BACKEND",
    "gower_to",
    "sqdist",
    "nearest_center",
    "greedy_prototypes",
    "tree_apply",
    "best_split",
]
