"""CSV ingest, row cleaning, IQR outlier flags and z-score normalization."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

ROLES = ("demographic", "covid-outcome", "identifier")
COVID_OUTCOMES = ("DpM", "CpM", "TpM")


class SchemaError(ValueError):
    """Input table does not match the declared attribute schema."""


@dataclass(frozen=True)
class AttributeMeta:
    name: str
    unit: str = ""
    role: str = "demographic"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r} for {self.name!r}")
        if self.role == "covid-outcome" and self.name not in COVID_OUTCOMES:
            raise ValueError(f"role 'covid-outcome' is reserved for {COVID_OUTCOMES}, got {self.name!r}")


@dataclass(frozen=True)
class CleaningAction:
    row_id: str
    column: str | None
    action: str
    reason: str

    def to_json(self):
        return {"row_id": self.row_id, "column": self.column, "action": self.action, "reason": self.reason}


@dataclass(frozen=True, eq=False)
class NumericTable:
    """Countries x attributes matrix; NaN marks a missing cell."""

    row_ids: tuple[str, ...]
    columns: tuple[AttributeMeta, ...]
    values: np.ndarray
    source: str = ""
    loaded_at: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape != (len(self.row_ids), len(self.columns)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{len(self.row_ids)} rows x {len(self.columns)} columns"
            )
        seen = set()
        for rid in self.row_ids:
            if not isinstance(rid, str) or not rid:
                raise ValueError(f"row ids must be non-empty strings, got {rid!r}")
            if rid in seen:
                raise SchemaError(f"duplicate row id {rid!r}")
            seen.add(rid)
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in {names}")
        values.flags.writeable = False
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "values", values)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def shape(self):
        return self.values.shape

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(f"unknown column {name!r}")

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_index(name)]

    def with_values(self, values) -> NumericTable:
        return replace(self, values=values)

    def take_rows(self, mask) -> NumericTable:
        mask = np.asarray(mask, dtype=bool)
        ids = tuple(r for r, keep in zip(self.row_ids, mask) if keep)
        return replace(self, row_ids=ids, values=self.values[mask])

    def select(self, names: Sequence[str]) -> NumericTable:
        idx = [self.column_index(n) for n in names]
        return replace(self, columns=tuple(self.columns[i] for i in idx), values=self.values[:, idx])

    def equals(self, other: NumericTable) -> bool:
        return (
            self.row_ids == other.row_ids
            and self.columns == other.columns
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass(frozen=True)
class ColumnStats:
    mean: float
    std: float
    q1: float
    median: float
    q3: float
    iqr: float
    lower_fence: float
    upper_fence: float
    n_present: int


@dataclass
class ZScoreResult:
    table: NumericTable
    stats: dict[str, tuple[float, float]]
    degenerate: list[str] = field(default_factory=list)

    def invert(self, table: NumericTable | None = None) -> NumericTable:
        """Undo the normalization for every non-degenerate column."""
        table = self.table if table is None else table
        values = table.values.copy()
        for name, (mean, std) in self.stats.items():
            if name in self.degenerate:
                continue
            j = table.column_index(name)
            values[:, j] = values[:, j] * std + mean
        return table.with_values(values)


# -- schema -----------------------------------------------------------------


def load_schema(path) -> list[AttributeMeta]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return [AttributeMeta(**entry) for entry in raw]


def schema_to_json(schema: Iterable[AttributeMeta]) -> list[dict]:
    return [{"name": a.name, "unit": a.unit, "role": a.role} for a in schema]


# -- ingest -----------------------------------------------------------------


def _parse_cell(text: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def load_csv(source, schema: Sequence[AttributeMeta]) -> tuple[NumericTable, list[CleaningAction]]:
    """Parse a UTF-8 CSV into a :class:`NumericTable`.

    ``source`` may be a path, a bytes object or a binary/text file object.
    The first CSV column holds the row identifier; the remaining header names
    must equal the schema's non-identifier attribute names (order free).
    Cells that do not parse as finite reals become missing and are reported.
    """
    name = ""
    if isinstance(source, (str, os.PathLike)):
        name = os.fspath(source)
        with open(source, "rb") as fh:
            raw = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    else:
        name = getattr(source, "name", "") or ""
        raw = source.read()
    text = raw.decode("utf-8-sig") if isinstance(raw, (bytes, bytearray)) else raw

    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("CSV has no header row") from None
    header = [h.strip() for h in header]

    numeric = [a for a in schema if a.role != "identifier"]
    expected = {a.name for a in numeric}
    got = header[1:]
    missing = sorted(expected - set(got))
    extra = sorted(set(got) - expected)
    if missing or extra or len(got) != len(set(got)):
        dupes = sorted({g for g in got if got.count(g) > 1})
        raise SchemaError(f"header/schema mismatch: missing={missing} extra={extra} duplicated={dupes}")
    position = {h: i + 1 for i, h in enumerate(got)}

    row_ids: list[str] = []
    rows: list[list[float]] = []
    report: list[CleaningAction] = []
    seen: set[str] = set()
    for line in reader:
        if not line or all(not c.strip() for c in line):
            continue
        rid = line[0].strip()
        if not rid:
            raise SchemaError(f"empty row identifier in data row {len(row_ids) + 1}")
        if rid in seen:
            raise SchemaError(f"duplicate row id {rid!r}")
        seen.add(rid)
        cells = line + [""] * (len(header) - len(line))
        out = []
        for attr in numeric:
            text = cells[position[attr.name]]
            value = _parse_cell(text)
            if value is None:
                if text.strip():
                    report.append(CleaningAction(rid, attr.name, "set-missing", f"unparseable numeric {text.strip()!r}"))
                out.append(np.nan)
            else:
                out.append(value)
        row_ids.append(rid)
        rows.append(out)

    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(numeric))
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return NumericTable(tuple(row_ids), tuple(numeric), values, source=name, loaded_at=stamp), report


def _format_value(v: float) -> str:
    if np.isnan(v):
        return ""
    return repr(float(v))


def write_csv(table: NumericTable, path, id_column: str = "Country") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([id_column, *table.column_names])
        for rid, row in zip(table.row_ids, table.values):
            writer.writerow([rid, *(_format_value(v) for v in row)])


# -- cleaning ---------------------------------------------------------------


def load_blocklist(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]


def drop_invalid_rows(table: NumericTable, blocklist: Sequence[str]) -> tuple[NumericTable, list[CleaningAction]]:
    """Remove rows whose identifier equals or contains any blocklist pattern."""
    keep = np.ones(len(table.row_ids), dtype=bool)
    report = []
    for i, rid in enumerate(table.row_ids):
        for pattern in blocklist:
            if rid == pattern or pattern in rid:
                keep[i] = False
                report.append(CleaningAction(rid, None, "drop-row", f"identifier matches blocklist pattern {pattern!r}"))
                break
    return table.take_rows(keep), report


def interpolated_quantiles(values, points) -> np.ndarray:
    """Quantiles by linear interpolation at (n - 1) * p of the sorted sample."""
    return np.quantile(np.asarray(values, dtype=np.float64), points, method="linear")


def column_stats(table: NumericTable, column: str, k: float = 1.5) -> ColumnStats:
    x = table.column(column)
    x = x[~np.isnan(x)]
    if x.size == 0:
        raise ValueError(f"column {column!r} has no present values")
    q1, med, q3 = interpolated_quantiles(x, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    if math.isinf(k):
        lo, hi = -math.inf, math.inf
    else:
        lo, hi = q1 - k * iqr, q3 + k * iqr
    return ColumnStats(
        mean=float(np.mean(x)),
        std=std,
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        iqr=float(iqr),
        lower_fence=float(lo),
        upper_fence=float(hi),
        n_present=int(x.size),
    )


def iqr_outlier_flags(table: NumericTable, column: str, k: float = 1.5) -> np.ndarray:
    stats = column_stats(table, column, k)
    x = table.column(column)
    with np.errstate(invalid="ignore"):
        flags = (x < stats.lower_fence) | (x > stats.upper_fence)
    return flags & ~np.isnan(x)


def remove_outliers(
    table: NumericTable, columns: Sequence[str], k: float = 1.5, drop_row: bool = False
) -> tuple[NumericTable, list[CleaningAction]]:
    """Blank (or drop the rows of) IQR outliers in ``columns``.

    Fences for every column are computed on the input table, before any
    removal, so the result does not depend on column order.
    """
    flags = {c: iqr_outlier_flags(table, c, k) for c in columns}
    report = []
    if drop_row:
        any_flag = np.zeros(len(table.row_ids), dtype=bool)
        for c in columns:
            any_flag |= flags[c]
        for i in np.flatnonzero(any_flag):
            cols = [c for c in columns if flags[c][i]]
            report.append(CleaningAction(table.row_ids[i], ",".join(cols), "drop-row", f"IQR outlier (k={k})"))
        return table.take_rows(~any_flag), report
    values = table.values.copy()
    for c in columns:
        j = table.column_index(c)
        for i in np.flatnonzero(flags[c]):
            report.append(CleaningAction(table.row_ids[i], c, "set-missing", f"IQR outlier {values[i, j]!r} (k={k})"))
            values[i, j] = np.nan
    return table.with_values(values), report


def zscore_normalize(table: NumericTable, columns: Sequence[str] | None = None) -> ZScoreResult:
    """Standardize columns with the sample (n - 1) standard deviation.

    Constant columns (or columns with fewer than two present values) map to
    zeros and are listed in ``degenerate``. Missing cells stay missing.
    """
    columns = table.column_names if columns is None else list(columns)
    values = table.values.copy()
    stats = {}
    degenerate = []
    for c in columns:
        j = table.column_index(c)
        x = values[:, j]
        present = ~np.isnan(x)
        if not present.any():
            stats[c] = (math.nan, math.nan)
            degenerate.append(c)
            continue
        mean = float(np.mean(x[present]))
        std = float(np.std(x[present], ddof=1)) if present.sum() > 1 else 0.0
        stats[c] = (mean, std)
        if std == 0.0:
            degenerate.append(c)
            x[present] = 0.0
        else:
            x[present] = (x[present] - mean) / std
    return ZScoreResult(table.with_values(values), stats, degenerate)
