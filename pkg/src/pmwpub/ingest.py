"""Dataset acquisition: raw CSV loading against a schema, public/private
splits with a controllable sampling bias, and public-data subsampling.

Raw cells are mapped to category indexes three ways, per attribute: through
the vocabulary (`values`), through numeric bin edges (`bins`, right-open
intervals with the last bin right-closed and on-edge values going right), or
parsed directly as an index. Missing-value markers such as "?" are ordinary
vocabulary entries with their own category index.
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .domain import Attribute, Dataset, Schema
from .errors import (
    BinRangeError,
    ConfigError,
    DataError,
    MissingColumnError,
    UnknownCategoryError,
)

__all__ = ["SplitSpec", "load_csv", "biased_split", "subsample_public"]


def _bin_index(attr: Attribute, raw: str, row: int) -> int:
    try:
        value = float(raw)
    except ValueError:
        raise BinRangeError(row, attr.name, float("nan")) from None
    edges = attr.bins
    if value == edges[-1]:  # last bin is right-closed
        return attr.cardinality - 1
    idx = bisect_right(edges, value) - 1
    if idx < 0 or idx >= attr.cardinality:
        raise BinRangeError(row, attr.name, value)
    return idx


def load_csv(path, schema: Schema) -> Dataset:
    """Parse a raw headered CSV into an encoded Dataset.

    Header names must cover the schema's attributes (order-insensitive;
    extra columns are ignored). Row count is preserved exactly.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f, skipinitialspace=True)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        positions = []
        for attr in schema.attributes:
            if attr.name not in header:
                raise MissingColumnError(attr.name)
            positions.append(header.index(attr.name))
        vocab = [
            {v: i for i, v in enumerate(a.values)} if a.values is not None else None
            for a in schema.attributes
        ]
        rows = []
        for row_no, record in enumerate(reader):
            if len(record) <= max(positions):
                raise DataError(f"{path}: row {row_no} has {len(record)} cells")
            encoded = np.empty(len(schema), dtype=np.int64)
            for j, attr in enumerate(schema.attributes):
                raw = record[positions[j]].strip()
                if vocab[j] is not None:
                    if raw not in vocab[j]:
                        raise UnknownCategoryError(row_no, attr.name, raw)
                    encoded[j] = vocab[j][raw]
                elif attr.bins is not None:
                    encoded[j] = _bin_index(attr, raw, row_no)
                else:
                    try:
                        code = int(raw)
                    except ValueError:
                        raise UnknownCategoryError(row_no, attr.name, raw) from None
                    if not 0 <= code < attr.cardinality:
                        raise UnknownCategoryError(row_no, attr.name, raw)
                    encoded[j] = code
            rows.append(encoded)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(schema, np.stack(rows))


@dataclass
class SplitSpec:
    """Public/private split protocol with an optional stratum bias.

    The public part draws each row from the `bias_attribute == bias_value`
    stratum with probability r + bias_delta (r is the stratum's base rate in
    the source data, measured here) and uniformly within the chosen stratum.
    """

    private_fraction: float = 0.9
    public_fraction: float = 0.1
    bias_attribute: str | None = None
    bias_value: int | str | None = None
    bias_delta: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if not (self.private_fraction > 0 and self.public_fraction > 0):
            raise ConfigError("split fractions must be positive")
        if (self.bias_attribute is None) != (self.bias_value is None):
            raise ConfigError("bias_attribute and bias_value go together")


def _resolve_bias_value(schema: Schema, attr_index: int, value: int | str) -> int:
    attr = schema.attributes[attr_index]
    if isinstance(value, str):
        if attr.values is None or value not in attr.values:
            raise ConfigError(f"{value!r} is not a category of attribute {attr.name!r}")
        return attr.values.index(value)
    if not 0 <= value < attr.cardinality:
        raise ConfigError(f"bias value {value} out of range for attribute {attr.name!r}")
    return int(value)


def biased_split(
    data: Dataset, spec: SplitSpec, rng: np.random.Generator | None = None
) -> tuple[Dataset, Dataset]:
    """Sample (private, public) datasets with replacement from `data`.

    Sizes are round(fraction * N). The private part is drawn from its own
    seeded stream, so it is identical across bias settings with the same
    seed. `rng` overrides the spec seed for both streams when given.
    """
    spec.validate()
    n = data.size
    if rng is None:
        private_rng, public_rng = [
            np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(2)
        ]
    else:
        private_rng = public_rng = rng

    n_private = max(1, round(spec.private_fraction * n))
    n_public = max(1, round(spec.public_fraction * n))
    private = Dataset(data.schema, data.values[private_rng.integers(0, n, size=n_private)])

    if spec.bias_attribute is None:
        public_idx = public_rng.integers(0, n, size=n_public)
    else:
        attr = data.schema.index(spec.bias_attribute)
        target = _resolve_bias_value(data.schema, attr, spec.bias_value)
        in_stratum = data.values[:, attr] == target
        stratum = np.flatnonzero(in_stratum)
        complement = np.flatnonzero(~in_stratum)
        rate = len(stratum) / n
        p = rate + spec.bias_delta
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"base rate {rate:.4f} + delta {spec.bias_delta} outside [0, 1]")
        if p > 0 and len(stratum) == 0:
            raise DataError(f"stratum {spec.bias_attribute}={spec.bias_value!r} is empty")
        if p < 1 and len(complement) == 0:
            raise DataError(f"complement of {spec.bias_attribute}={spec.bias_value!r} is empty")
        take_stratum = public_rng.random(n_public) < p
        public_idx = np.empty(n_public, dtype=np.int64)
        n_take = int(take_stratum.sum())
        if n_take:
            public_idx[take_stratum] = stratum[public_rng.integers(0, len(stratum), size=n_take)]
        if n_take < n_public:
            public_idx[~take_stratum] = complement[
                public_rng.integers(0, len(complement), size=n_public - n_take)
            ]
    public = Dataset(data.schema, data.values[public_idx])
    return private, public


def subsample_public(public: Dataset, p: float, rng: np.random.Generator) -> Dataset:
    """Uniform sample without replacement of round(p * m) rows, at least 1."""
    if not 0.0 < p <= 1.0:
        raise ConfigError("subsample fraction must be in (0, 1]")
    m = public.size
    keep = max(1, round(p * m))
    idx = rng.choice(m, size=keep, replace=False)
    return Dataset(public.schema, public.values[idx])
