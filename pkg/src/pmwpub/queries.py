"""k-way marginal workloads and linear-query evaluation.

A workload is the set of all marginal queries over one attribute subset; a
query set is a flat, stably-indexed concatenation of workloads. Answers for
a whole workload are computed at once by mixed-radix-encoding the projected
rows and histogramming, which is what keeps the reweighting loop cheap even
for query sets with 10^5..10^6 queries.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .domain import Dataset, Distribution, Schema, Support
from .errors import DataError

__all__ = [
    "MarginalQuery",
    "Workload",
    "QuerySet",
    "AnswerMatrix",
    "build_workloads",
    "evaluate_on_dataset",
    "evaluate_on_distribution",
    "answers_on_dataset",
    "worst_error",
    "error_metrics",
]


@dataclass(frozen=True)
class MarginalQuery:
    """Predicate `all(record[attrs[j]] == values[j])`, averaged over rows."""

    attrs: tuple[int, ...]
    values: tuple[int, ...]

    def __post_init__(self):
        if len(self.attrs) != len(self.values):
            raise DataError("attrs and values must have equal length")
        if any(a >= b for a, b in zip(self.attrs, self.attrs[1:])):
            raise DataError("attrs must be strictly increasing")

    def check(self, schema: Schema) -> None:
        if not self.attrs:
            raise DataError("marginal query needs at least one attribute")
        if self.attrs[-1] >= len(schema) or self.attrs[0] < 0:
            raise DataError(f"attribute index out of range for schema: {self.attrs}")
        for a, v in zip(self.attrs, self.values):
            if not 0 <= v < schema.cardinalities[a]:
                raise DataError(f"target {v} out of range for attribute {schema.names[a]!r}")

    def matches(self, values: np.ndarray) -> np.ndarray:
        """Predicate evaluated on an (n, d) array; returns float 0/1 vector."""
        cols = values[:, list(self.attrs)]
        return np.all(cols == np.asarray(self.values), axis=1).astype(np.float64)


@dataclass(frozen=True)
class Workload:
    """All marginal queries over one attribute subset."""

    attrs: tuple[int, ...]

    def size(self, schema: Schema) -> int:
        return math.prod(int(schema.cardinalities[a]) for a in self.attrs)

    def queries(self, schema: Schema):
        """Enumerate queries in mixed-radix order (last attribute fastest)."""
        ranges = [range(int(schema.cardinalities[a])) for a in self.attrs]
        for values in itertools.product(*ranges):
            yield MarginalQuery(self.attrs, values)


def _cell_codes(values: np.ndarray, attrs: tuple[int, ...], cards: np.ndarray) -> np.ndarray:
    """Mixed-radix cell index of each row's projection onto `attrs`."""
    codes = np.zeros(values.shape[0], dtype=np.int64)
    for a in attrs:
        codes = codes * int(cards[a]) + values[:, a]
    return codes


class QuerySet:
    """Flat, stably-indexed list of marginal queries grouped by workload."""

    def __init__(self, schema: Schema, workloads: list[tuple[int, ...]]):
        if not workloads:
            raise DataError("query set must contain at least one workload")
        self.schema = schema
        self.workloads = [Workload(tuple(int(a) for a in w)) for w in workloads]
        for w in self.workloads:
            MarginalQuery(w.attrs, tuple(0 for _ in w.attrs)).check(schema)
        sizes = [w.size(schema) for w in self.workloads]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.total = int(self.offsets[-1])

    def __len__(self) -> int:
        return self.total

    def workload_of(self, index: int) -> int:
        if not 0 <= index < self.total:
            raise DataError(f"query index {index} out of range")
        return int(np.searchsorted(self.offsets, index, side="right") - 1)

    def query(self, index: int) -> MarginalQuery:
        w = self.workload_of(index)
        attrs = self.workloads[w].attrs
        cards = [int(self.schema.cardinalities[a]) for a in attrs]
        cell = index - int(self.offsets[w])
        values = []
        for c in reversed(cards):
            values.append(cell % c)
            cell //= c
        return MarginalQuery(attrs, tuple(reversed(values)))

    def to_dict(self) -> dict:
        ks = {len(w.attrs) for w in self.workloads}
        return {
            "k": ks.pop() if len(ks) == 1 else None,
            "workloads": [list(w.attrs) for w in self.workloads],
        }

    @classmethod
    def from_dict(cls, schema: Schema, doc: dict) -> "QuerySet":
        return cls(schema, [tuple(w) for w in doc["workloads"]])


def build_workloads(schema: Schema, k: int, count: int, seed: int) -> list[tuple[int, ...]]:
    """Sample `count` distinct k-attribute subsets uniformly without replacement.

    With count == C(d, k) all subsets are returned in lexicographic order.
    """
    d = len(schema)
    if not 1 <= k <= d:
        raise DataError(f"k must be in 1..{d}, got {k}")
    total = math.comb(d, k)
    if count > total:
        raise DataError(f"requested {count} workloads but only C({d},{k}) = {total} exist")
    if count < 1:
        raise DataError("count must be >= 1")
    if count == total:
        return [tuple(c) for c in itertools.combinations(range(d), k)]
    rng = np.random.default_rng(seed)
    chosen: list[tuple[int, ...]] = []
    seen = set()
    while len(chosen) < count:
        subset = tuple(sorted(rng.choice(d, size=k, replace=False).tolist()))
        if subset not in seen:
            seen.add(subset)
            chosen.append(subset)
    return chosen


def evaluate_on_dataset(query: MarginalQuery, dataset: Dataset) -> float:
    """Fraction of rows matching the query: exact count divided by n."""
    query.check(dataset.schema)
    return float(np.count_nonzero(query.matches(dataset.values) > 0) / dataset.size)


def evaluate_on_distribution(query: MarginalQuery, dist: Distribution) -> float:
    """Expectation of the predicate under the distribution's weights."""
    query.check(dist.support.schema)
    weights = dist.weights
    if abs(weights.sum() - 1.0) > 1e-9:
        raise DataError("distribution is not normalized")
    return float(query.matches(dist.support.points) @ weights)


def answers_on_dataset(queryset: QuerySet, dataset: Dataset) -> np.ndarray:
    """Exact answers of every query, as one flat vector (the q(D) precompute)."""
    if dataset.schema != queryset.schema:
        raise DataError("dataset and query set schemas differ")
    cards = queryset.schema.cardinalities
    parts = []
    for w in queryset.workloads:
        codes = _cell_codes(dataset.values, w.attrs, cards)
        parts.append(np.bincount(codes, minlength=w.size(queryset.schema)) / dataset.size)
    return np.concatenate(parts)


class AnswerMatrix:
    """Per-(query, support-point) predicate values, materialized lazily.

    Full rows are built only for queries that get selected or replayed;
    whole-query-set answers against a weight vector go through per-workload
    histograms instead and never materialize the |Q| x |support| matrix.
    """

    def __init__(self, support: Support, queryset: QuerySet):
        if support.schema != queryset.schema:
            raise DataError("support and query set schemas differ")
        self.support = support
        self.queryset = queryset
        cards = queryset.schema.cardinalities
        self._codes = [
            _cell_codes(support.points, w.attrs, cards) for w in queryset.workloads
        ]
        self._sizes = [w.size(queryset.schema) for w in queryset.workloads]
        self._rows: dict[int, np.ndarray] = {}

    def row(self, index: int) -> np.ndarray:
        """0/1 predicate vector of query `index` over the support points."""
        cached = self._rows.get(index)
        if cached is None:
            w = self.queryset.workload_of(index)
            cell = index - int(self.queryset.offsets[w])
            cached = (self._codes[w] == cell).astype(np.float64)
            self._rows[index] = cached
        return cached

    def answers(self, weights: np.ndarray) -> np.ndarray:
        """q(A) for every query given the support weight vector."""
        parts = [
            np.bincount(codes, weights=weights, minlength=size)
            for codes, size in zip(self._codes, self._sizes)
        ]
        return np.concatenate(parts)


def _error_vector(
    queryset: QuerySet,
    dataset: Dataset,
    dist: Distribution,
    matrix: AnswerMatrix | None = None,
) -> np.ndarray:
    if dataset.schema != dist.support.schema:
        raise DataError("dataset and distribution schemas differ")
    if matrix is None:
        matrix = AnswerMatrix(dist.support, queryset)
    return np.abs(answers_on_dataset(queryset, dataset) - matrix.answers(dist.weights))


def worst_error(
    queryset: QuerySet,
    dataset: Dataset,
    dist: Distribution,
    matrix: AnswerMatrix | None = None,
) -> tuple[int, float]:
    """Index and value of the largest |q(D) - q(A)|; lowest index wins ties."""
    errs = _error_vector(queryset, dataset, dist, matrix)
    idx = int(np.argmax(errs))
    return idx, float(errs[idx])


def error_metrics(
    queryset: QuerySet,
    dataset: Dataset,
    dist: Distribution,
    matrix: AnswerMatrix | None = None,
) -> dict[str, float]:
    """Max, mean, and mean-squared |q(D) - q(A)| over every query."""
    errs = _error_vector(queryset, dataset, dist, matrix)
    return {
        "max": float(errs.max()),
        "mean": float(errs.mean()),
        "mse": float((errs**2).mean()),
    }
