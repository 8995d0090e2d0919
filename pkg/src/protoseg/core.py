"""Domain types and the mixed dissimilarity / cost primitives.

A record combines a numeric vector (squared Euclidean distance) with a
categorical code vector (simple-matching distance).  The two parts are
combined by a non-negative weight gamma:

    d(x, q) = sum_j (x_j^num - q_j^num)^2 + gamma * sum_j [x_j^cat != q_j^cat]

All types are immutable after construction and safe to share across threads;
the distance operations are pure functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionError,
    EmptyClusterError,
    ParameterError,
    SchemaError,
)

MODEL_SCHEMA_VERSION = "protoseg-model/1"

#: Reserved categorical code for values unseen at training time.  It
#: mismatches every code, including itself.
UNKNOWN = -1


@dataclass(frozen=True)
class Standardization:
    """Per-numeric-attribute z-score transform (original -> internal units)."""

    means: tuple[float, ...]
    stds: tuple[float, ...]

    def __post_init__(self):
        if len(self.means) != len(self.stds):
            raise SchemaError("standardization means/stds length mismatch")
        if any(s <= 0 for s in self.stds):
            raise SchemaError("standardization stddev must be > 0")

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - np.asarray(self.means)) / np.asarray(self.stds)

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * np.asarray(self.stds) + np.asarray(self.means)


@dataclass(frozen=True)
class DatasetSchema:
    """Names, units and category dictionaries for one mixed dataset.

    ``numeric_attrs`` is a sequence of (name, unit) pairs; ``categorical_attrs``
    maps each categorical attribute name to its label -> dense-code dictionary
    (codes 0..#categories-1).
    """

    numeric_attrs: tuple[tuple[str, str], ...]
    categorical_attrs: tuple[tuple[str, tuple[str, ...]], ...]
    standardization: Optional[Standardization] = None

    def __post_init__(self):
        num_names = [n for n, _ in self.numeric_attrs]
        cat_names = [n for n, _ in self.categorical_attrs]
        if not num_names and not cat_names:
            raise SchemaError("schema needs at least one attribute")
        if set(num_names) & set(cat_names):
            raise SchemaError("numeric and categorical attribute names overlap")
        if len(set(num_names)) != len(num_names) or len(set(cat_names)) != len(cat_names):
            raise SchemaError("duplicate attribute names")
        for name, labels in self.categorical_attrs:
            if len(set(labels)) != len(labels) or not labels:
                raise SchemaError(f"category labels for {name!r} must be unique and non-empty")
        if self.standardization is not None and len(self.standardization.means) != len(num_names):
            raise SchemaError("standardization length does not match numeric attributes")

    @property
    def m_r(self) -> int:
        return len(self.numeric_attrs)

    @property
    def m_c(self) -> int:
        return len(self.categorical_attrs)

    def category_sizes(self) -> tuple[int, ...]:
        return tuple(len(labels) for _, labels in self.categorical_attrs)

    def encode_label(self, attr_index: int, label: str) -> int:
        """Dense code for a label; UNKNOWN for labels absent from the dictionary."""
        labels = self.categorical_attrs[attr_index][1]
        try:
            return labels.index(label)
        except ValueError:
            return UNKNOWN

    def decode_code(self, attr_index: int, code: int) -> str:
        if code == UNKNOWN:
            return "<UNKNOWN>"
        return self.categorical_attrs[attr_index][1][code]


@dataclass(frozen=True)
class MixedRecord:
    """One observation: numeric vector plus categorical code vector."""

    numeric: tuple[float, ...]
    categorical: tuple[int, ...]


class MixedDataset:
    """Records plus their schema, stored column-wise as numpy arrays."""

    def __init__(self, schema: DatasetSchema, records: Iterable[MixedRecord]):
        records = list(records)
        numeric = np.array([r.numeric for r in records], dtype=float).reshape(
            len(records), schema.m_r
        )
        categorical = np.array([r.categorical for r in records], dtype=np.int64).reshape(
            len(records), schema.m_c
        )
        self._init_arrays(schema, numeric, categorical)

    @classmethod
    def from_arrays(
        cls, schema: DatasetSchema, numeric: np.ndarray, categorical: np.ndarray
    ) -> "MixedDataset":
        obj = cls.__new__(cls)
        obj._init_arrays(
            schema,
            np.asarray(numeric, dtype=float),
            np.asarray(categorical, dtype=np.int64),
        )
        return obj

    def _init_arrays(self, schema: DatasetSchema, numeric: np.ndarray, categorical: np.ndarray):
        if numeric.ndim != 2 or categorical.ndim != 2:
            raise SchemaError("expected 2-D numeric and categorical arrays")
        if numeric.shape[0] != categorical.shape[0]:
            raise SchemaError("numeric / categorical row counts differ")
        if numeric.shape[1] != schema.m_r or categorical.shape[1] != schema.m_c:
            raise SchemaError("column counts do not match schema")
        if numeric.shape[0] < 1:
            raise SchemaError("dataset needs at least one record")
        if numeric.size and not np.all(np.isfinite(numeric)):
            raise SchemaError("numeric values must be finite")
        if categorical.size:
            sizes = np.asarray(schema.category_sizes())
            bad = (categorical != UNKNOWN) & ((categorical < 0) | (categorical >= sizes))
            if np.any(bad):
                raise SchemaError("categorical code out of range")
        self.schema = schema
        self.numeric = numeric
        self.numeric.setflags(write=False)
        self.categorical = categorical
        self.categorical.setflags(write=False)

    @property
    def n(self) -> int:
        return self.numeric.shape[0]

    def record(self, i: int) -> MixedRecord:
        return MixedRecord(tuple(self.numeric[i]), tuple(int(c) for c in self.categorical[i]))

    def records(self) -> list[MixedRecord]:
        return [self.record(i) for i in range(self.n)]

    def numeric_original(self) -> np.ndarray:
        """Numeric columns mapped back to original units (identity if no transform)."""
        if self.schema.standardization is None:
            return self.numeric
        return self.schema.standardization.invert(self.numeric)


@dataclass(frozen=True)
class Prototype:
    """One cluster center: numeric means, categorical modes and the
    per-attribute category counts they were derived from.

    ``category_freq[j]`` counts occurrences of each valid code of attribute j
    among the members; UNKNOWN occurrences are tallied separately so that
    counts plus unknowns always sum to ``member_count``.
    """

    numeric_center: tuple[float, ...]
    categorical_mode: tuple[int, ...]
    category_freq: tuple[tuple[int, ...], ...]
    member_count: int
    unknown_counts: tuple[int, ...] = ()

    def __post_init__(self):
        unknowns = self.unknown_counts or (0,) * len(self.category_freq)
        object.__setattr__(self, "unknown_counts", unknowns)
        for j, counts in enumerate(self.category_freq):
            if any(c < 0 for c in counts):
                raise SchemaError("negative category frequency")
            if sum(counts) + unknowns[j] != self.member_count:
                raise SchemaError("category frequencies do not sum to member count")
            mode = self.categorical_mode[j]
            if counts and mode >= 0 and counts[mode] != max(counts):
                raise SchemaError("stored mode is not a most frequent code")


@dataclass(frozen=True)
class ClusterCostBreakdown:
    """Numeric / categorical split of one cluster's cost."""

    numeric_cost: float
    categorical_cost: float

    def __post_init__(self):
        if self.numeric_cost < 0 or self.categorical_cost < 0:
            raise ParameterError("cost components must be non-negative")

    @property
    def total(self) -> float:
        return self.numeric_cost + self.categorical_cost


@dataclass(frozen=True)
class FitMeta:
    """Reproducibility metadata for a fitted model."""

    seed: int
    restarts: int
    iterations: tuple[int, ...]
    converged: bool
    best_restart: int
    gamma_estimated: bool = False


@dataclass(frozen=True)
class ClusterModel:
    """A fitted clustering: k prototypes, gamma, assignments and costs."""

    k: int
    gamma: float
    prototypes: tuple[Prototype, ...]
    assignment: tuple[int, ...]
    total_cost: float
    breakdowns: tuple[ClusterCostBreakdown, ...]
    fit_meta: FitMeta
    schema: DatasetSchema = field(repr=False, default=None)

    def __post_init__(self):
        if self.k != len(self.prototypes) or self.k != len(self.breakdowns):
            raise SchemaError("k does not match prototypes / breakdowns")
        counts = np.bincount(np.asarray(self.assignment), minlength=self.k)
        if np.any(counts == 0):
            raise EmptyClusterError("returned model contains an empty cluster")

    def centers_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        qn = np.array([p.numeric_center for p in self.prototypes], dtype=float).reshape(
            self.k, self.schema.m_r
        )
        qc = np.array([p.categorical_mode for p in self.prototypes], dtype=np.int64).reshape(
            self.k, self.schema.m_c
        )
        return qn, qc


# ---------------------------------------------------------------------------
# Distance primitives
# ---------------------------------------------------------------------------


def numeric_sqdist(x: Sequence[float], q: Sequence[float]) -> float:
    """Squared Euclidean distance between two numeric vectors."""
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if x.shape != q.shape:
        raise DimensionError(f"numeric length mismatch: {x.shape} vs {q.shape}")
    diff = x - q
    return float(diff @ diff)


def categorical_mismatch(x: Sequence[int], q: Sequence[int]) -> int:
    """Number of positions where the code vectors differ.

    UNKNOWN mismatches every code, including another UNKNOWN.
    """
    x = np.asarray(x, dtype=np.int64)
    q = np.asarray(q, dtype=np.int64)
    if x.shape != q.shape:
        raise DimensionError(f"categorical length mismatch: {x.shape} vs {q.shape}")
    return int(np.sum((x != q) | (x == UNKNOWN) | (q == UNKNOWN)))


def mixed_distance(record: MixedRecord, prototype: Prototype, gamma: float) -> float:
    """Combined distance of a record to a prototype center."""
    if gamma < 0:
        raise ParameterError("gamma must be >= 0")
    return numeric_sqdist(record.numeric, prototype.numeric_center) + gamma * categorical_mismatch(
        record.categorical, prototype.categorical_mode
    )


def cluster_categorical_cost(prototype: Prototype, gamma: float) -> float:
    """Categorical part of a cluster's cost, computed from its frequency tables.

    Equals gamma times the total mismatch count of the members against the
    mode vector: per attribute, member_count - freq(mode), with UNKNOWN
    members always counting as mismatches.
    """
    if gamma < 0:
        raise ParameterError("gamma must be >= 0")
    n_l = prototype.member_count
    if n_l == 0:
        raise EmptyClusterError("cluster has no members")
    mismatches = 0
    for j, counts in enumerate(prototype.category_freq):
        mode = prototype.categorical_mode[j]
        mode_count = counts[mode] if counts and mode >= 0 else 0
        mismatches += n_l - mode_count
    return gamma * mismatches


# ---------------------------------------------------------------------------
# Model document (de)serialization — schema version "protoseg-model/1"
# ---------------------------------------------------------------------------


def model_to_document(model: ClusterModel) -> dict:
    """JSON-serializable document with prototype centers in original units."""
    schema = model.schema
    std = schema.standardization
    centers = np.array(
        [p.numeric_center for p in model.prototypes], dtype=float
    ).reshape(model.k, schema.m_r)
    if std is not None:
        centers = std.invert(centers)
    return {
        "version": MODEL_SCHEMA_VERSION,
        "schema": {
            "numeric_attrs": [{"name": n, "unit": u} for n, u in schema.numeric_attrs],
            "categorical_attrs": [
                {"name": n, "categories": list(labels)} for n, labels in schema.categorical_attrs
            ],
            "standardization": None
            if std is None
            else {"means": list(std.means), "stds": list(std.stds)},
        },
        "gamma": model.gamma,
        "prototypes": [
            {
                "numeric_center_original": list(centers[l]),
                "categorical_mode": list(p.categorical_mode),
                "category_freq": [list(c) for c in p.category_freq],
                "unknown_counts": list(p.unknown_counts),
                "member_count": p.member_count,
            }
            for l, p in enumerate(model.prototypes)
        ],
        "assignment": list(model.assignment),
        "total_cost": model.total_cost,
        "breakdowns": [
            {"numeric_cost": b.numeric_cost, "categorical_cost": b.categorical_cost, "total": b.total}
            for b in model.breakdowns
        ],
        "fit_meta": {
            "seed": model.fit_meta.seed,
            "restarts": model.fit_meta.restarts,
            "iterations": list(model.fit_meta.iterations),
            "converged": model.fit_meta.converged,
            "best_restart": model.fit_meta.best_restart,
            "gamma_estimated": model.fit_meta.gamma_estimated,
        },
    }


def model_from_document(doc: dict) -> ClusterModel:
    if doc.get("version") != MODEL_SCHEMA_VERSION:
        raise SchemaError(f"unsupported model version: {doc.get('version')!r}")
    sdoc = doc["schema"]
    std = None
    if sdoc.get("standardization"):
        std = Standardization(
            tuple(sdoc["standardization"]["means"]), tuple(sdoc["standardization"]["stds"])
        )
    schema = DatasetSchema(
        numeric_attrs=tuple((a["name"], a["unit"]) for a in sdoc["numeric_attrs"]),
        categorical_attrs=tuple(
            (a["name"], tuple(a["categories"])) for a in sdoc["categorical_attrs"]
        ),
        standardization=std,
    )
    prototypes = []
    for pdoc in doc["prototypes"]:
        center = np.asarray(pdoc["numeric_center_original"], dtype=float)
        if std is not None:
            center = std.apply(center)
        prototypes.append(
            Prototype(
                numeric_center=tuple(float(v) for v in center),
                categorical_mode=tuple(pdoc["categorical_mode"]),
                category_freq=tuple(tuple(c) for c in pdoc["category_freq"]),
                member_count=pdoc["member_count"],
                unknown_counts=tuple(pdoc.get("unknown_counts", ())),
            )
        )
    meta = doc["fit_meta"]
    return ClusterModel(
        k=len(prototypes),
        gamma=doc["gamma"],
        prototypes=tuple(prototypes),
        assignment=tuple(doc["assignment"]),
        total_cost=doc["total_cost"],
        breakdowns=tuple(
            ClusterCostBreakdown(b["numeric_cost"], b["categorical_cost"])
            for b in doc["breakdowns"]
        ),
        fit_meta=FitMeta(
            seed=meta["seed"],
            restarts=meta["restarts"],
            iterations=tuple(meta["iterations"]),
            converged=meta["converged"],
            best_restart=meta["best_restart"],
            gamma_estimated=meta.get("gamma_estimated", False),
        ),
        schema=schema,
    )


def save_model(model: ClusterModel, path, header_comment: str | None = None) -> None:
    doc = model_to_document(model)
    text = json.dumps(doc, indent=2, sort_keys=True)
    with open(path, "w") as fh:
        fh.write(text + "\n")


def load_model(path) -> ClusterModel:
    with open(path) as fh:
        return model_from_document(json.load(fh))
