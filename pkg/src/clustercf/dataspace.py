"""Tabular data: feature schema, CSV loading, scaling, encoding and Gower distance.

Instances are plain tuples aligned with a :class:`FeatureSchema` (floats for
numeric features, strings for categorical ones). Internally the search works
on *code matrices*: numeric columns keep their value and categorical columns
hold the index of the value in the (sorted) domain.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from clustercf import kernels

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class DataFormatError(ValueError):
    """Raised for malformed input tables."""


class SchemaMismatch(ValueError):
    """An instance or matrix does not match the schema it is used with."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    low: float = 0.0
    high: float = 0.0
    domain: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind == NUMERIC:
            if self.low > self.high:
                raise ValueError(f"{self.name}: min {self.low} > max {self.high}")
        elif self.kind == CATEGORICAL:
            if not self.domain:
                raise ValueError(f"{self.name}: empty categorical domain")
            object.__setattr__(self, "domain", tuple(sorted(set(self.domain))))
        else:
            raise ValueError(f"{self.name}: unknown feature kind {self.kind!r}")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def span(self) -> float:
        return self.high - self.low if self.kind == NUMERIC else 0.0

    def to_dict(self) -> dict:
        if self.is_categorical:
            return {"name": self.name, "kind": self.kind, "domain": list(self.domain)}
        return {"name": self.name, "kind": self.kind, "min": self.low, "max": self.high}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        if d["kind"] == CATEGORICAL:
            return cls(d["name"], CATEGORICAL, domain=tuple(d["domain"]))
        return cls(d["name"], NUMERIC, float(d["min"]), float(d["max"]))


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def is_categorical(self) -> np.ndarray:
        return np.array([f.is_categorical for f in self.features], dtype=bool)

    @property
    def spans(self) -> np.ndarray:
        return np.array([f.span for f in self.features], dtype=np.float64)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def validate(self, instance: Sequence) -> None:
        if len(instance) != len(self.features):
            raise SchemaMismatch(f"instance has {len(instance)} values, schema has {len(self.features)}")
        for spec, value in zip(self.features, instance):
            if spec.is_categorical and value not in spec.domain:
                raise SchemaMismatch(f"{spec.name}: {value!r} not in domain")

    def to_codes(self, instance: Sequence) -> np.ndarray:
        self.validate(instance)
        out = np.empty(len(self.features))
        for j, (spec, value) in enumerate(zip(self.features, instance)):
            out[j] = spec.domain.index(value) if spec.is_categorical else float(value)
        return out

    def from_codes(self, codes: Sequence[float]) -> tuple:
        if len(codes) != len(self.features):
            raise SchemaMismatch("code vector length does not match schema")
        return tuple(
            spec.domain[int(c)] if spec.is_categorical else float(c)
            for spec, c in zip(self.features, codes)
        )

    def to_dict(self) -> dict:
        return {"features": [f.to_dict() for f in self.features]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(tuple(FeatureSpec.from_dict(f) for f in d["features"]))


@dataclass(frozen=True)
class Dataset:
    schema: FeatureSchema
    rows: tuple[tuple, ...]
    id: str = "dataset"
    _codes: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        codes = np.array([self.schema.to_codes(r) for r in self.rows], dtype=np.float64)
        codes = codes.reshape(len(self.rows), len(self.schema))
        codes.setflags(write=False)
        object.__setattr__(self, "_codes", codes)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def codes(self) -> np.ndarray:
        """Read-only code matrix, one row per instance."""
        return self._codes


def infer_schema(names: Sequence[str], columns: Sequence[Sequence[str]],
                 categorical_hints: Iterable[str] = ()) -> FeatureSchema:
    hints = set(categorical_hints)
    specs = []
    for name, col in zip(names, columns):
        values = None
        if name not in hints:
            try:
                values = [float(v) for v in col]
            except ValueError:
                values = None
            if values is not None and not all(math.isfinite(v) for v in values):
                values = None
        if values is None:
            specs.append(FeatureSpec(name, CATEGORICAL, domain=tuple(col)))
        else:
            specs.append(FeatureSpec(name, NUMERIC, min(values), max(values)))
    return FeatureSchema(tuple(specs))


def load_csv(path, has_header: bool = True, categorical_hints: Iterable[str] = (),
             dataset_id: str | None = None) -> Dataset:
    """Read a complete comma-separated table into a :class:`Dataset`.

    A column is numeric when every cell parses as a finite float and the column
    is not listed in ``categorical_hints``. Ragged rows, empty files and empty
    cells raise :class:`DataFormatError`; nothing is imputed.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        table = [row for row in csv.reader(fh) if row]
    if not table:
        raise DataFormatError(f"{path}: empty file")
    if has_header:
        names, body = [c.strip() for c in table[0]], table[1:]
    else:
        names, body = [f"x{j}" for j in range(len(table[0]))], table
    if not body:
        raise DataFormatError(f"{path}: no data rows")
    width = len(names)
    for lineno, row in enumerate(body, start=2 if has_header else 1):
        if len(row) != width:
            raise DataFormatError(f"{path}:{lineno}: expected {width} cells, got {len(row)}")
        if any(cell.strip() == "" for cell in row):
            raise DataFormatError(f"{path}:{lineno}: missing cell")
    body = [[cell.strip() for cell in row] for row in body]
    columns = list(zip(*body))
    schema = infer_schema(names, columns, categorical_hints)
    rows = []
    for row in body:
        rows.append(tuple(v if spec.is_categorical else float(v) for spec, v in zip(schema.features, row)))
    return Dataset(schema, tuple(rows), dataset_id or path.stem)


def write_csv(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(dataset.schema.names)
        for row in dataset.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def gower_distance(a: Sequence, b: Sequence, schema: FeatureSchema) -> float:
    """Mean per-feature dissimilarity between two instances.

    Numeric features use the absolute difference over the schema range,
    clamped at 1 (0 for constant features); categorical features count a
    mismatch as 1.
    """
    ca = schema.to_codes(a)
    cb = schema.to_codes(b)
    return float(gower_codes(ca[None, :], cb, schema)[0])


def gower_codes(A: np.ndarray, b: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    """Vectorized Gower distance from each code row of ``A`` to code vector ``b``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.shape[1] != len(schema) or len(b) != len(schema):
        raise SchemaMismatch("code width does not match schema")
    return kernels.gower_to(A, b, schema.spans, schema.is_categorical.astype(np.uint8))


@dataclass(frozen=True)
class ScalingParams:
    """Per numeric feature ``(mean, std)``; a zero std maps the feature to 0."""

    params: dict

    def transform_codes(self, codes: np.ndarray, schema: FeatureSchema) -> np.ndarray:
        out = np.array(codes, dtype=np.float64, copy=True)
        for j, spec in enumerate(schema.features):
            if spec.name in self.params:
                mean, std = self.params[spec.name]
                out[..., j] = (out[..., j] - mean) / std if std > 0 else 0.0
        return out

    def inverse_codes(self, codes: np.ndarray, schema: FeatureSchema) -> np.ndarray:
        out = np.array(codes, dtype=np.float64, copy=True)
        for j, spec in enumerate(schema.features):
            if spec.name in self.params:
                mean, std = self.params[spec.name]
                out[..., j] = out[..., j] * std + mean
        return out

    def inverse(self, dataset: Dataset, schema: FeatureSchema) -> Dataset:
        codes = self.inverse_codes(dataset.codes, dataset.schema)
        return Dataset(schema, tuple(schema.from_codes(c) for c in codes), dataset.id)

    def to_json(self) -> str:
        return json.dumps({k: {"mean": m, "std": s} for k, (m, s) in self.params.items()}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScalingParams":
        raw = json.loads(text)
        return cls({k: (float(v["mean"]), float(v["std"])) for k, v in raw.items()})


def fit_scaling(dataset: Dataset) -> ScalingParams:
    codes = dataset.codes
    params = {}
    for j, spec in enumerate(dataset.schema.features):
        if not spec.is_categorical:
            col = codes[:, j]
            params[spec.name] = (float(col.mean()), float(col.std()))
    return ScalingParams(params)


def standardize(dataset: Dataset) -> tuple[Dataset, ScalingParams]:
    """Zero-mean, unit-variance numeric columns (population std).

    Categorical columns pass through. The returned params invert the mapping.
    """
    if len(dataset) == 0:
        raise ValueError("cannot standardize an empty dataset")
    params = fit_scaling(dataset)
    scaled = params.transform_codes(dataset.codes, dataset.schema)
    names = dataset.schema.names
    cols = [scaled[:, j] for j in range(len(names))]
    rows = [dataset.schema.from_codes(c) for c in scaled]
    specs = []
    for spec, col in zip(dataset.schema.features, cols):
        if spec.is_categorical:
            specs.append(spec)
        else:
            specs.append(FeatureSpec(spec.name, NUMERIC, float(col.min()), float(col.max())))
    return Dataset(FeatureSchema(tuple(specs)), tuple(rows), dataset.id), params


class FeatureEncoder:
    """Maps code matrices to the numeric space models are fitted in.

    Numeric columns are standardized (when ``scaling`` is given) and
    categorical columns are one-hot encoded in domain order.
    """

    def __init__(self, schema: FeatureSchema, scaling: ScalingParams | None = None):
        self.schema = schema
        self.scaling = scaling
        self._num_idx = [j for j, f in enumerate(schema.features) if not f.is_categorical]
        self._cat_idx = [j for j, f in enumerate(schema.features) if f.is_categorical]
        self._cat_sizes = [len(schema.features[j].domain) for j in self._cat_idx]

    @classmethod
    def fit(cls, dataset: Dataset, standardize: bool = True) -> "FeatureEncoder":
        return cls(dataset.schema, fit_scaling(dataset) if standardize else None)

    @property
    def width(self) -> int:
        return len(self._num_idx) + sum(self._cat_sizes)

    def output_names(self) -> list[str]:
        names = [self.schema.features[j].name for j in self._num_idx]
        for j in self._cat_idx:
            spec = self.schema.features[j]
            names += [f"{spec.name}={v}" for v in spec.domain]
        return names

    def encode(self, codes: np.ndarray) -> np.ndarray:
        codes = np.atleast_2d(np.asarray(codes, dtype=np.float64))
        if codes.shape[1] != len(self.schema):
            raise SchemaMismatch(f"expected {len(self.schema)} columns, got {codes.shape[1]}")
        if self.scaling is not None:
            codes = self.scaling.transform_codes(codes, self.schema)
        parts = [codes[:, self._num_idx]]
        for j, size in zip(self._cat_idx, self._cat_sizes):
            onehot = np.zeros((codes.shape[0], size))
            onehot[np.arange(codes.shape[0]), codes[:, j].astype(np.int64)] = 1.0
            parts.append(onehot)
        return np.hstack(parts)

    def encode_instance(self, instance: Sequence) -> np.ndarray:
        return self.encode(self.schema.to_codes(instance)[None, :])[0]

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "scaling": None if self.scaling is None
            else {k: {"mean": m, "std": s} for k, (m, s) in self.scaling.params.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureEncoder":
        scaling = d.get("scaling")
        if scaling is not None:
            scaling = ScalingParams({k: (float(v["mean"]), float(v["std"])) for k, v in scaling.items()})
        return cls(FeatureSchema.from_dict(d["schema"]), scaling)
