"""Rectangular self-organizing map: training, BMU search, U-matrix, planes.

Nodes are numbered 1..rows*cols row by row starting at the bottom-left
corner, so node ``rows*cols`` sits at the top-right.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .tabular import NumericTable


@dataclass(frozen=True, eq=False)
class SomGrid:
    rows: int
    cols: int
    dim: int
    codebooks: np.ndarray
    seed: int = 0
    features: tuple[str, ...] = ()

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")
        cb = np.array(self.codebooks, dtype=np.float64, copy=True)
        if cb.shape != (self.rows * self.cols, self.dim):
            raise ValueError(f"codebooks shape {cb.shape} != ({self.rows * self.cols}, {self.dim})")
        if not np.isfinite(cb).all():
            raise ValueError("codebooks must be finite")
        if self.features and len(self.features) != self.dim:
            raise ValueError("feature names do not match dim")
        cb.flags.writeable = False
        object.__setattr__(self, "codebooks", cb)
        object.__setattr__(self, "features", tuple(self.features))

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    def node_index(self, row: int, col: int) -> int:
        """1-based node number of lattice cell (row from bottom, col from left)."""
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise IndexError((row, col))
        return row * self.cols + col + 1

    def node_position(self, node: int) -> tuple[int, int]:
        if not 1 <= node <= self.n_nodes:
            raise IndexError(node)
        return divmod(node - 1, self.cols)

    def coords(self) -> np.ndarray:
        k = np.arange(self.n_nodes)
        return np.column_stack([k // self.cols, k % self.cols]).astype(np.float64)

    def lattice_d2(self) -> np.ndarray:
        c = self.coords()
        diff = c[:, None, :] - c[None, :, :]
        return (diff**2).sum(axis=2)

    def to_json(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "dim": self.dim,
            "seed": self.seed,
            "features": list(self.features),
            "codebooks": self.codebooks.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> SomGrid:
        return cls(
            rows=int(obj["rows"]),
            cols=int(obj["cols"]),
            dim=int(obj["dim"]),
            codebooks=np.asarray(obj["codebooks"], dtype=np.float64).reshape(-1, int(obj["dim"])),
            seed=int(obj.get("seed", 0)),
            features=tuple(obj.get("features", ())),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> SomGrid:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class TrainingSchedule:
    """Exponentially decaying learning rate and Gaussian radius.

    ``n`` counts single-sample presentations from 0, so
    eta(n) = eta0 * exp(-n / tau_eta) and sigma(n) = sigma0 * exp(-n / tau_sigma).
    """

    epochs: int
    eta0: float
    sigma0: float
    tau_eta: float = math.inf
    tau_sigma: float = math.inf

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not 0.0 <= self.eta0 <= 1.0:
            raise ValueError("eta0 must lie in [0, 1]")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.tau_eta <= 0 or self.tau_sigma <= 0:
            raise ValueError("decay constants must be positive")

    @classmethod
    def default(cls, rows, cols, n_samples, epochs=500, eta0=0.5, sigma_final=0.5, eta_final=0.01):
        sigma0 = max(rows, cols) / 2.0
        last = max(epochs * n_samples - 1, 1)
        tau_sigma = last / math.log(sigma0 / sigma_final) if sigma0 > sigma_final else math.inf
        tau_eta = last / math.log(eta0 / eta_final) if eta0 > eta_final else math.inf
        return cls(epochs=epochs, eta0=eta0, sigma0=sigma0, tau_eta=tau_eta, tau_sigma=tau_sigma)

    def rates(self, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
        steps = np.arange(self.epochs * n_samples, dtype=np.float64)
        return self.eta0 * np.exp(-steps / self.tau_eta), self.sigma0 * np.exp(-steps / self.tau_sigma)

    def to_json(self) -> dict:
        return {k: (None if math.isinf(v) else v) for k, v in self.__dict__.items()}


@dataclass
class MapOverlay:
    """Per-node sample membership and an optional per-node scalar."""

    members: dict[int, list[tuple[str, str | None]]]
    values: np.ndarray | None = None
    excluded: list[str] = field(default_factory=list)

    def node_of(self) -> dict[str, int]:
        return {rid: node for node, items in self.members.items() for rid, _ in items}

    def to_json(self) -> dict:
        out = {}
        for node, items in self.members.items():
            entry = {"members": [{"row_id": r, "label": lb} for r, lb in items]}
            if self.values is not None:
                entry["value"] = float(self.values[node - 1])
            out[str(node)] = entry
        return out


def node_values_json(values) -> dict[str, float]:
    return {str(i + 1): float(v) for i, v in enumerate(values)}


def complete_rows(table: NumericTable, features: Sequence[str]):
    """Matrix of rows with every selected feature present.

    Returns ``(matrix, row_ids, excluded_row_ids)``.
    """
    sub = table.select(list(features)).values
    ok = ~np.isnan(sub).any(axis=1)
    ids = [r for r, k in zip(table.row_ids, ok) if k]
    excluded = [r for r, k in zip(table.row_ids, ok) if not k]
    return np.ascontiguousarray(sub[ok]), ids, excluded


def init_som(rows: int, cols: int, dim: int, seed: int, data, features: Sequence[str] = ()) -> SomGrid:
    """Seeded uniform codebooks inside each feature's observed range."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != dim:
        raise ValueError(f"data has {data.shape[-1] if data.ndim == 2 else '?'} features, expected dim={dim}")
    if data.shape[0] < 1:
        raise ValueError("need at least one complete row to initialize")
    if not np.isfinite(data).all():
        raise ValueError("init data must be complete and finite")
    rng = np.random.default_rng(seed)
    lo, hi = data.min(axis=0), data.max(axis=0)
    codebooks = rng.uniform(lo, hi, size=(rows * cols, dim))
    return SomGrid(rows, cols, dim, codebooks, seed=seed, features=tuple(features))


def _check_vector(grid: SomGrid, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (grid.dim,):
        raise ValueError(f"expected a vector of length {grid.dim}, got shape {x.shape}")
    if np.isnan(x).any():
        raise ValueError("input vector contains NaN")
    return x


def bmu(grid: SomGrid, x) -> tuple[int, float]:
    """Best matching unit (1-based) and its Euclidean distance; ties -> lowest node."""
    x = _check_vector(grid, x)
    diff = grid.codebooks - x
    d2 = np.einsum("ij,ij->i", diff, diff)
    j = int(np.argmin(d2))
    return j + 1, float(np.sqrt(d2[j]))


def neighborhood(grid: SomGrid, winner: int, sigma: float) -> np.ndarray:
    """Gaussian lattice neighborhood exp(-d^2 / (2 sigma^2)) around ``winner``."""
    d2 = grid.lattice_d2()[winner - 1]
    return np.exp(-d2 / (2.0 * sigma * sigma))


def apply_update(grid: SomGrid, x, eta: float, sigma: float) -> tuple[SomGrid, np.ndarray]:
    """One presentation: move every codebook toward ``x`` by eta * h.

    Returns the updated grid and the per-node step eta * h.
    """
    x = _check_vector(grid, x)
    winner, _ = bmu(grid, x)
    step = eta * neighborhood(grid, winner, sigma)
    cb = (1.0 - step)[:, None] * grid.codebooks + step[:, None] * x
    return replace(grid, codebooks=cb), step


def train(
    grid: SomGrid, data, schedule: TrainingSchedule, workers: int = 1, backend: str | None = None
) -> tuple[SomGrid, np.ndarray]:
    """Online training over seeded per-epoch shuffles.

    Returns the trained grid and the quantization error after each epoch.
    The result is identical for any ``workers`` value.
    """
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("training data is empty")
    if data.shape[1] != grid.dim:
        raise ValueError(f"data has {data.shape[1]} features, grid expects {grid.dim}")
    if not np.isfinite(data).all():
        raise ValueError("training rows must be complete; drop rows with missing features first")
    n = data.shape[0]
    rng = np.random.default_rng([grid.seed, 1])
    orders = np.stack([rng.permutation(n) for _ in range(schedule.epochs)])
    etas, sigmas = schedule.rates(n)
    codebooks = np.array(grid.codebooks, dtype=np.float64, copy=True)
    qe = kernels.train_som(codebooks, grid.lattice_d2(), data, orders, etas, sigmas, workers=workers, backend=backend)
    return replace(grid, codebooks=codebooks), qe


def quantization_error(grid: SomGrid, data) -> float:
    return float(kernels.quantization_distances(grid.codebooks, np.asarray(data, dtype=np.float64)).mean())


def u_matrix(grid: SomGrid) -> np.ndarray:
    """Mean distance from each node to its 4-connected lattice neighbours."""
    cb = grid.codebooks.reshape(grid.rows, grid.cols, grid.dim)
    total = np.zeros((grid.rows, grid.cols))
    count = np.zeros((grid.rows, grid.cols))
    if grid.rows > 1:
        d = np.linalg.norm(cb[1:] - cb[:-1], axis=2)
        total[1:] += d
        total[:-1] += d
        count[1:] += 1
        count[:-1] += 1
    if grid.cols > 1:
        d = np.linalg.norm(cb[:, 1:] - cb[:, :-1], axis=2)
        total[:, 1:] += d
        total[:, :-1] += d
        count[:, 1:] += 1
        count[:, :-1] += 1
    out = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return out.reshape(-1)


def component_plane(grid: SomGrid, feature) -> np.ndarray:
    if isinstance(feature, str):
        if feature not in grid.features:
            raise KeyError(f"unknown feature {feature!r}")
        feature = grid.features.index(feature)
    if not 0 <= feature < grid.dim:
        raise IndexError(f"feature index {feature} out of range for dim {grid.dim}")
    return grid.codebooks[:, feature].copy()


def map_samples(grid: SomGrid, data, row_ids: Sequence[str], labels: Sequence[str | None] | None = None) -> MapOverlay:
    data = np.asarray(data, dtype=np.float64)
    if len(row_ids) != data.shape[0]:
        raise ValueError("row_ids and data disagree in length")
    labels = list(labels) if labels is not None else [None] * len(row_ids)
    members: dict[int, list[tuple[str, str | None]]] = {k: [] for k in range(1, grid.n_nodes + 1)}
    for rid, x, lb in zip(row_ids, data, labels):
        node, _ = bmu(grid, x)
        members[node].append((rid, lb))
    return MapOverlay(members)
