"""Threshold-based discretization of numeric attributes into ordinal labels."""

from __future__ import annotations

import bisect
import csv
import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .tabular import NumericTable, SchemaError, interpolated_quantiles

DEMOGRAPHIC_LABELS = ("L", "M", "H")
OUTCOME_LABELS = ("Minor", "low", "moderate", "high")


@dataclass(frozen=True)
class Bins:
    cuts: tuple[float, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cuts)
        labels = tuple(str(lb) for lb in self.labels)
        if any(not math.isfinite(c) for c in cuts):
            raise ValueError("cut points must be finite")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"cut points must be strictly increasing: {cuts}")
        if len(labels) != len(cuts) + 1:
            raise ValueError(f"need {len(cuts) + 1} labels for {len(cuts)} cuts, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels {labels}")
        object.__setattr__(self, "cuts", cuts)
        object.__setattr__(self, "labels", labels)


class ThresholdConfig(dict):
    """Mapping attribute name -> :class:`Bins`, in insertion order."""

    @classmethod
    def from_json(cls, obj: Mapping) -> ThresholdConfig:
        return cls({name: Bins(tuple(spec["cuts"]), tuple(spec["labels"])) for name, spec in obj.items()})

    @classmethod
    def load(cls, path) -> ThresholdConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        return {name: {"cuts": list(b.cuts), "labels": list(b.labels)} for name, b in self.items()}

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")


def bin_index(value: float, cuts: Sequence[float]) -> int:
    """Number of cuts strictly below ``value`` (a value on a cut stays low)."""
    if math.isnan(value):
        raise ValueError("cannot bin NaN")
    return bisect.bisect_left(cuts, value)


def bin_value(value: float, cuts: Sequence[float], labels: Sequence[str]) -> str:
    if len(labels) != len(cuts) + 1:
        raise ValueError("need exactly one more label than cut")
    return labels[bin_index(value, cuts)]


def auto_thresholds(values, quantile_points: Sequence[float]) -> tuple[float, ...]:
    """Cut points at interpolated sample quantiles.

    Coinciding cuts are merged with a warning; if that leaves fewer bins than
    the data can fill, a ValueError suggests asking for fewer bins.
    """
    x = np.asarray(values, dtype=np.float64)
    x = x[~np.isnan(x)]
    points = [float(p) for p in quantile_points]
    if x.size < 2:
        raise ValueError("need at least two present values")
    if not points or any(not 0.0 < p < 1.0 for p in points):
        raise ValueError("quantile points must lie in (0, 1)")
    if any(b <= a for a, b in zip(points, points[1:])):
        raise ValueError("quantile points must be strictly increasing")
    n_bins = len(points) + 1
    distinct = np.unique(x).size
    if distinct < n_bins:
        raise ValueError(f"only {distinct} distinct values for {n_bins} bins; use fewer bins")
    raw = [float(q) for q in interpolated_quantiles(x, points)]
    cuts = []
    for q in raw:
        if not cuts or q > cuts[-1]:
            cuts.append(q)
    if len(cuts) < len(raw):
        warnings.warn(f"duplicate quantile cuts collapsed: {raw} -> {cuts}", stacklevel=2)
    if cuts[-1] >= x.max():
        # the top bin would be empty
        raise ValueError(f"quantile cuts {cuts} leave the upper bin empty; use fewer bins")
    return tuple(cuts)


@dataclass(frozen=True, eq=False)
class CategoricalTable:
    """Ordinal labels per (row, attribute); code -1 marks a missing cell."""

    row_ids: tuple[str, ...]
    attributes: tuple[str, ...]
    codes: np.ndarray
    config: ThresholdConfig

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.int16, copy=True).reshape(len(self.row_ids), len(self.attributes))
        for j, a in enumerate(self.attributes):
            n = len(self.config[a].labels)
            col = codes[:, j]
            if ((col < -1) | (col >= n)).any():
                raise ValueError(f"code out of range for attribute {a!r}")
        codes.flags.writeable = False
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "codes", codes)

    def labels(self, attribute: str) -> tuple[str, ...]:
        return self.config[attribute].labels

    def attribute_index(self, attribute: str) -> int:
        try:
            return self.attributes.index(attribute)
        except ValueError:
            raise KeyError(f"unknown attribute {attribute!r}") from None

    def column(self, attribute: str) -> list[str | None]:
        j = self.attribute_index(attribute)
        labels = self.labels(attribute)
        return [labels[c] if c >= 0 else None for c in self.codes[:, j]]

    def equals(self, other: CategoricalTable) -> bool:
        return (
            self.row_ids == other.row_ids
            and self.attributes == other.attributes
            and np.array_equal(self.codes, other.codes)
            and all(self.config[a] == other.config[a] for a in self.attributes)
        )

    @classmethod
    def from_labels(cls, row_ids, columns: Mapping[str, Sequence[str | None]], config: ThresholdConfig):
        """Build from label text; handy for tests and for reloading CSVs."""
        attrs = tuple(columns)
        codes = np.full((len(row_ids), len(attrs)), -1, dtype=np.int16)
        for j, a in enumerate(attrs):
            lookup = {lb: i for i, lb in enumerate(config[a].labels)}
            for i, lb in enumerate(columns[a]):
                if lb is None or lb == "":
                    continue
                if lb not in lookup:
                    raise SchemaError(f"label {lb!r} not in {config[a].labels} for attribute {a!r}")
                codes[i, j] = lookup[lb]
        return cls(tuple(row_ids), attrs, codes, config)


def discretize_table(table: NumericTable, config: ThresholdConfig) -> CategoricalTable:
    unknown = [a for a in config if a not in table.column_names]
    if unknown:
        raise SchemaError(f"threshold config references unknown attributes: {unknown}")
    attrs = tuple(config)
    codes = np.full((len(table.row_ids), len(attrs)), -1, dtype=np.int16)
    for j, a in enumerate(attrs):
        x = table.column(a)
        present = ~np.isnan(x)
        # searchsorted(side="left") counts cuts strictly below each value
        codes[present, j] = np.searchsorted(np.asarray(config[a].cuts), x[present], side="left")
    used = ThresholdConfig({a: config[a] for a in attrs})
    return CategoricalTable(table.row_ids, attrs, codes, used)


def category_histogram(table: CategoricalTable, attribute: str) -> dict[str, int]:
    """Counts of present labels, in the attribute's ordinal label order."""
    j = table.attribute_index(attribute)
    labels = table.labels(attribute)
    counts = Counter(int(c) for c in table.codes[:, j] if c >= 0)
    return {labels[c]: counts[c] for c in sorted(counts)}


def write_categorical_csv(table: CategoricalTable, path, id_column: str = "Country") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([id_column, *table.attributes])
        cols = [table.column(a) for a in table.attributes]
        for i, rid in enumerate(table.row_ids):
            writer.writerow([rid, *(c[i] or "" for c in cols)])


def read_categorical_csv(path, config: ThresholdConfig) -> CategoricalTable:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = rows[0][1:]
    unknown = [a for a in header if a not in config]
    if unknown:
        raise SchemaError(f"{path}: expected categorical columns from the threshold config, got unknown {unknown}")
    body = [r for r in rows[1:] if r]
    columns = {a: [r[j + 1] if j + 1 < len(r) else "" for r in body] for j, a in enumerate(header)}
    return CategoricalTable.from_labels([r[0] for r in body], columns, config)
