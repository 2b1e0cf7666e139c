"""Pearson chi-square test of independence on categorical attribute pairs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discretizer import CategoricalTable

#: p-values below this are reported as an underflow rather than a number
P_UNDERFLOW = 1e-300

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def _log_prefactor(a: float, x: float) -> float:
    return a * math.log(x) - x - math.lgamma(a)


def _lower_series(a: float, x: float) -> float:
    # P(a, x) = x^a e^-x / Gamma(a) * sum_n x^n / (a (a+1) ... (a+n))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(_log_prefactor(a, x))


def _upper_log_cf(a: float, x: float) -> float:
    """log Q(a, x) from the Legendre continued fraction (modified Lentz)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return _log_prefactor(a, x) + math.log(h)


def regularized_upper_gamma(a: float, x: float) -> float:
    """Q(a, x) = Gamma(a, x) / Gamma(a) for a > 0, x >= 0."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0 or math.isnan(x):
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _lower_series(a, x)))
    log_q = _upper_log_cf(a, x)
    return math.exp(log_q) if log_q > -745.0 else 0.0


def chi_sq_sf_marked(x: float, dof: int) -> tuple[float, bool]:
    """Upper-tail chi-square probability plus an underflow flag.

    When the flag is set the returned value is 0.0 and the true tail is
    below :data:`P_UNDERFLOW`.
    """
    if dof < 1 or int(dof) != dof:
        raise ValueError("dof must be a positive integer")
    if x < 0 or math.isnan(x):
        raise ValueError("x must be non-negative")
    p = regularized_upper_gamma(dof / 2.0, x / 2.0)
    if p < P_UNDERFLOW:
        return 0.0, True
    return p, False


def chi_sq_sf(x: float, dof: int) -> float:
    return chi_sq_sf_marked(x, dof)[0]


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    counts: np.ndarray
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError("counts shape does not match labels")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_counts(cls, counts, row_labels=None, col_labels=None, prune=True):
        """Wrap a count matrix, optionally dropping all-zero rows/columns."""
        counts = np.asarray(counts, dtype=np.int64)
        rows = tuple(row_labels) if row_labels is not None else tuple(f"r{i}" for i in range(counts.shape[0]))
        cols = tuple(col_labels) if col_labels is not None else tuple(f"c{j}" for j in range(counts.shape[1]))
        notes = []
        if prune:
            keep_r = counts.sum(axis=1) > 0
            keep_c = counts.sum(axis=0) > 0
            for lb, k in zip(rows, keep_r):
                if not k:
                    notes.append(f"dropped empty row category {lb!r}")
            for lb, k in zip(cols, keep_c):
                if not k:
                    notes.append(f"dropped empty column category {lb!r}")
            counts = counts[keep_r][:, keep_c]
            rows = tuple(lb for lb, k in zip(rows, keep_r) if k)
            cols = tuple(lb for lb, k in zip(cols, keep_c) if k)
        if len(rows) < 2 or len(cols) < 2:
            raise ValueError(
                f"test undefined: need at least 2 non-empty categories per side, got {len(rows)}x{len(cols)}"
            )
        return cls(rows, cols, counts, tuple(notes))


@dataclass(frozen=True, eq=False)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    expected: np.ndarray
    low_expected_warning: bool
    underflow: bool = False
    notes: tuple[str, ...] = field(default=())

    def p_text(self) -> str:
        return f"<{P_UNDERFLOW:g}" if self.underflow else repr(self.p_value)


def contingency_table(table: CategoricalTable, x: str, y: str) -> ContingencyTable:
    """Cross-tabulate two attributes over rows where both labels are present."""
    jx = table.attribute_index(x)
    jy = table.attribute_index(y)
    cx = table.codes[:, jx].astype(np.int64)
    cy = table.codes[:, jy].astype(np.int64)
    both = (cx >= 0) & (cy >= 0)
    if not both.any():
        raise ValueError(f"no rows with both {x!r} and {y!r} present")
    nx, ny = len(table.labels(x)), len(table.labels(y))
    counts = np.zeros((nx, ny), dtype=np.int64)
    np.add.at(counts, (cx[both], cy[both]), 1)
    return ContingencyTable.from_counts(counts, table.labels(x), table.labels(y))


def chi_square(ct: ContingencyTable, yates: bool = False) -> ChiSquareResult:
    """Pearson's statistic sum((O - E)^2 / E); Yates correction only if asked and dof == 1."""
    obs = ct.counts.astype(np.float64)
    n = obs.sum()
    if n <= 0:
        raise ValueError("contingency table is empty")
    row = obs.sum(axis=1)
    col = obs.sum(axis=0)
    expected = np.outer(row, col) / n
    dof = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    dev = np.abs(obs - expected)
    if yates and dof == 1:
        dev = np.maximum(dev - 0.5, 0.0)
    stat = float(np.sum(dev * dev / expected))
    p, under = chi_sq_sf_marked(stat, dof)
    expected.flags.writeable = False
    return ChiSquareResult(
        statistic=stat,
        dof=dof,
        p_value=p,
        expected=expected,
        low_expected_warning=bool((expected < 5).any()),
        underflow=under,
        notes=ct.notes,
    )


def pair_report(table: CategoricalTable, x: str, y: str, yates: bool = False) -> dict:
    """One entry of the pairwise test report."""
    res = chi_square(contingency_table(table, x, y), yates=yates)
    warning = None
    if res.low_expected_warning:
        warning = "expected count below 5 in at least one cell"
    if res.notes:
        warning = "; ".join(filter(None, [warning, *res.notes]))
    return {
        "x": x,
        "y": y,
        "statistic": res.statistic,
        "dof": res.dof,
        "p_value": res.p_text() if res.underflow else res.p_value,
        "warning": warning,
    }

