"""Bundled and synthetic datasets used by the tests, benchmarks and CLI."""
from __future__ import annotations

import numpy as np

from clustercf.dataspace import Dataset, FeatureSchema, FeatureSpec, NUMERIC, infer_schema


def wine() -> Dataset:
    """UCI Wine (178 rows, 13 numeric features, class column dropped).

    The copy shipped with scikit-learn is used so no download is needed.
    """
    from sklearn.datasets import load_wine

    raw = load_wine()
    names = [n.replace("/", "_") for n in raw.feature_names]
    rows = [tuple(float(v) for v in r) for r in raw.data]
    cols = list(zip(*[[repr(v) for v in r] for r in rows]))
    return Dataset(infer_schema(names, cols), tuple(rows), "wine")


def blobs(centers, n_per: int = 50, spread: float = 0.5, seed: int = 0,
          dataset_id: str = "blobs") -> tuple[Dataset, np.ndarray]:
    """Isotropic Gaussian blobs; returns the dataset and the true blob index per row."""
    centers = np.asarray(centers, dtype=np.float64)
    rng = np.random.default_rng(seed)
    X = np.vstack([c + spread * rng.standard_normal((n_per, centers.shape[1])) for c in centers])
    truth = np.repeat(np.arange(len(centers)), n_per)
    specs = tuple(FeatureSpec(f"x{j}", NUMERIC, float(X[:, j].min()), float(X[:, j].max()))
                  for j in range(X.shape[1]))
    return Dataset(FeatureSchema(specs), tuple(tuple(float(v) for v in r) for r in X), dataset_id), truth
