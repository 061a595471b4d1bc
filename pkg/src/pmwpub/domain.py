"""Data universe: categorical schemas, encoded datasets, deduplicated
supports, and weighted distributions over supports.

Records are dense vectors of category indexes, one per attribute, so the
full domain (whose size can exceed 64 bits) is never materialized.
Distribution weights live in log space: multiplicative-weights runs apply
hundreds of exp(+-1/2)-scale factors, which underflow in linear space.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SchemaMismatchError


@dataclass(frozen=True)
class Attribute:
    """One categorical column with codes 0..cardinality-1.

    `bins`, when present, are the numeric edges used at ingest to map a raw
    continuous column into `cardinality` intervals (len(bins) == cardinality+1,
    intervals right-open except the last, which is right-closed).  `values`,
    when present, is the raw-label vocabulary; a label's position is its code.
    """

    name: str
    cardinality: int
    bins: tuple[float, ...] | None = None
    values: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.cardinality < 1:
            raise DataError(f"attribute {self.name!r}: cardinality must be >= 1")
        if self.bins is not None:
            if len(self.bins) != self.cardinality + 1:
                raise DataError(
                    f"attribute {self.name!r}: {self.cardinality} bins need "
                    f"{self.cardinality + 1} edges, got {len(self.bins)}"
                )
            if any(a >= b for a, b in zip(self.bins, self.bins[1:])):
                raise DataError(f"attribute {self.name!r}: bin edges must be strictly increasing")
        if self.values is not None and len(self.values) != self.cardinality:
            raise DataError(
                f"attribute {self.name!r}: vocabulary size {len(self.values)} "
                f"!= cardinality {self.cardinality}"
            )


class Schema:
    """Ordered attribute list defining the data domain."""

    def __init__(self, attributes: list[Attribute] | tuple[Attribute, ...]):
        self.attributes = tuple(attributes)
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise DataError("attribute names must be unique")
        self.names = tuple(names)
        self.cardinalities = np.array([a.cardinality for a in self.attributes], dtype=np.int64)
        self._index = {name: i for i, name in enumerate(names)}

    def __len__(self) -> int:
        return len(self.attributes)

    def __eq__(self, other) -> bool:
        return isinstance(other, Schema) and self.attributes == other.attributes

    def __hash__(self):
        return hash(self.attributes)

    def index(self, name: str) -> int:
        if name not in self._index:
            raise DataError(f"no attribute named {name!r}")
        return self._index[name]

    def domain_size(self) -> int:
        """Exact number of domain points (Python int, may exceed 64 bits)."""
        return math.prod(int(c) for c in self.cardinalities)

    def domain_size_log10(self) -> float:
        """log10 of the domain size; safe for domains that overflow floats."""
        return float(sum(math.log10(int(c)) for c in self.cardinalities))

    def to_dict(self) -> dict:
        out = []
        for a in self.attributes:
            entry: dict = {"name": a.name, "cardinality": a.cardinality}
            if a.bins is not None:
                entry["bins"] = list(a.bins)
            if a.values is not None:
                entry["values"] = list(a.values)
            out.append(entry)
        return {"attributes": out}

    @classmethod
    def from_dict(cls, doc: dict) -> "Schema":
        try:
            raw = doc["attributes"]
        except (KeyError, TypeError):
            raise DataError("schema document must have an 'attributes' list")
        attrs = []
        for entry in raw:
            attrs.append(
                Attribute(
                    name=entry["name"],
                    cardinality=int(entry["cardinality"]),
                    bins=tuple(float(x) for x in entry["bins"]) if "bins" in entry else None,
                    values=tuple(str(v) for v in entry["values"]) if "values" in entry else None,
                )
            )
        return cls(attrs)

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path) -> "Schema":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def validate_rows(schema: Schema, values: np.ndarray) -> np.ndarray:
    """Check an (n, d) array of category indexes against the schema."""
    values = np.asarray(values, dtype=np.int64)
    if values.ndim != 2 or values.shape[1] != len(schema):
        raise DataError(
            f"expected shape (n, {len(schema)}), got {values.shape}"
        )
    if values.size and (values.min() < 0 or np.any(values >= schema.cardinalities)):
        bad = np.argwhere((values < 0) | (values >= schema.cardinalities))[0]
        raise DataError(
            f"row {bad[0]}: index {values[bad[0], bad[1]]} out of range for "
            f"attribute {schema.names[bad[1]]!r}"
        )
    return values


class Dataset:
    """Encoded dataset: an (n, d) array of category indexes under a schema."""

    def __init__(self, schema: Schema, values: np.ndarray):
        self.schema = schema
        self.values = validate_rows(schema, values)
        if self.values.shape[0] < 1:
            raise DataError("dataset must contain at least one row")

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dataset)
            and self.schema == other.schema
            and self.values.shape == other.values.shape
            and bool(np.array_equal(self.values, other.values))
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(self.schema.names)
            writer.writerows(self.values.tolist())

    @classmethod
    def from_csv(cls, path, schema: Schema) -> "Dataset":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file")
            if tuple(header) != schema.names:
                raise DataError(f"{path}: header does not match schema attribute names")
            try:
                rows = [[int(cell) for cell in row] for row in reader]
            except ValueError as exc:
                raise DataError(f"{path}: non-integer cell: {exc}") from exc
        return cls(schema, np.array(rows, dtype=np.int64).reshape(len(rows), len(schema)))


class Support:
    """Deduplicated records of a source dataset, with source multiplicities.

    Points are stored in lexicographic row order (np.unique), so the support
    of a full-domain dataset coincides with mixed-radix domain enumeration.
    """

    def __init__(self, schema: Schema, points: np.ndarray, counts: np.ndarray):
        self.schema = schema
        self.points = validate_rows(schema, points)
        self.counts = np.asarray(counts, dtype=np.int64)
        if len(self.counts) != len(self.points):
            raise DataError("one multiplicity per support point required")
        if len(np.unique(self.points, axis=0)) != len(self.points):
            raise DataError("support points must be pairwise distinct")

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "Support":
        points, counts = np.unique(dataset.values, axis=0, return_counts=True)
        return cls(dataset.schema, points, counts)


class Distribution:
    """Normalized weights over a support's points, stored in log space."""

    def __init__(self, support: Support, log_weights: np.ndarray, _normalized: bool = False):
        self.support = support
        self.log_weights = np.asarray(log_weights, dtype=np.float64)
        if self.log_weights.shape != (len(support),):
            raise DataError("one log-weight per support point required")
        if np.any(np.isnan(self.log_weights)):
            raise DataError("log-weights must not contain NaN")
        self._normalized = _normalized
        self._weights: np.ndarray | None = None

    @classmethod
    def from_weights(cls, support: Support, weights: np.ndarray) -> "Distribution":
        """Wrap an already-normalized weight vector (sum within 1e-9 of 1)."""
        weights = np.asarray(weights, dtype=np.float64)
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise DataError("weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise DataError(f"weights sum to {weights.sum()!r}, expected 1")
        with np.errstate(divide="ignore"):
            dist = cls(support, np.log(weights), _normalized=True)
        dist._weights = weights
        return dist

    @classmethod
    def uniform(cls, support: Support) -> "Distribution":
        n = len(support)
        return cls.from_weights(support, np.full(n, 1.0 / n))

    @property
    def weights(self) -> np.ndarray:
        if self._weights is None:
            self._weights = np.exp(self.log_weights)
        return self._weights

    @property
    def is_normalized(self) -> bool:
        return self._normalized


def normalize(dist: Distribution) -> Distribution:
    """Shift log-weights so the weights sum to 1 (log-sum-exp, overflow-safe).

    Already-normalized distributions are returned unchanged, which makes the
    operation exactly idempotent. Relative weights are preserved: only a
    constant is subtracted in log space.
    """
    if dist.is_normalized:
        return dist
    lw = dist.log_weights
    m = np.max(lw)
    if not np.isfinite(m):
        raise DataError("cannot normalize: no finite log-weight")
    shifted = lw - (m + math.log(np.exp(lw - m).sum()))
    out = Distribution(dist.support, shifted, _normalized=True)
    return out


def empirical_distribution(dataset: Dataset) -> Distribution:
    """Distribution over supp(dataset) weighting each point by its frequency."""
    if dataset.size < 1:
        raise DataError("dataset must contain at least one row")
    support = Support.from_dataset(dataset)
    return Distribution.from_weights(support, support.counts / dataset.size)


def check_same_schema(*objs) -> Schema:
    schema = objs[0].schema
    for obj in objs[1:]:
        if obj.schema != schema:
            raise SchemaMismatchError("objects do not share a schema")
    return schema
