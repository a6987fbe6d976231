"""Finite grids, discrete distributions, tabular functions and feature subsets.

Everything in the package lives on a :class:`Grid`: one strictly increasing
list of values per feature. A cell is a tuple of per-feature indices, and
arrays over the grid are stored with shape ``grid.shape`` in row-major order
(last feature fastest).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

MAX_FEATURES = 20
MASS_TOL = 1e-12


class GridMismatchError(ValueError):
    """Raised when two objects that must share a grid do not."""


class EmptyMaskWarning(UserWarning):
    """Emitted when a determinedness check is vacuous because the mask is empty."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    """Per-feature finite value sets spanning a cell lattice."""

    feature_values: tuple[tuple[float, ...], ...]

    def __init__(self, feature_values: Sequence[Sequence[float]]):
        values = tuple(tuple(float(v) for v in col) for col in feature_values)
        if len(values) < 1:
            raise ValueError("a grid needs at least one feature")
        if len(values) > MAX_FEATURES:
            raise ValueError(f"at most {MAX_FEATURES} features are supported, got {len(values)}")
        for j, col in enumerate(values):
            if len(col) < 1:
                raise ValueError(f"feature {j} has no values")
            if any(b <= a for a, b in zip(col, col[1:])):
                raise ValueError(f"values of feature {j} must be strictly increasing")
            if not all(np.isfinite(col)):
                raise ValueError(f"values of feature {j} must be finite")
        object.__setattr__(self, "feature_values", values)

    @property
    def d(self) -> int:
        return len(self.feature_values)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(col) for col in self.feature_values)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def cells(self) -> list[tuple[int, ...]]:
        """All cells in row-major order."""
        return list(np.ndindex(*self.shape))

    def cell_values(self, cell: Sequence[int]) -> tuple[float, ...]:
        return tuple(self.feature_values[j][k] for j, k in enumerate(cell))

    def check_cell(self, cell: Sequence[int]) -> tuple[int, ...]:
        cell = tuple(int(k) for k in cell)
        if len(cell) != self.d:
            raise ValueError(f"cell {cell} has {len(cell)} coordinates, grid has {self.d} features")
        for j, k in enumerate(cell):
            if not 0 <= k < self.shape[j]:
                raise IndexError(f"cell {cell} is outside the grid (feature {j} has {self.shape[j]} values)")
        return cell

    def locate(self, rows: np.ndarray) -> np.ndarray:
        """Map an ``n x d`` array of raw feature values to grid indices.

        Raises ``ValueError`` if any entry is not one of the grid values.
        """
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.d:
            raise ValueError(f"expected an n x {self.d} array, got shape {rows.shape}")
        out = np.empty(rows.shape, dtype=np.intp)
        for j, col in enumerate(self.feature_values):
            ref = np.asarray(col)
            pos = np.clip(np.searchsorted(ref, rows[:, j]), 0, len(ref) - 1)
            bad = ref[pos] != rows[:, j]
            if bad.any():
                r = int(np.flatnonzero(bad)[0])
                raise ValueError(f"row {r}: value {rows[r, j]!r} of feature {j} is not on the grid")
            out[:, j] = pos
        return out

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Grid) and self.feature_values == other.feature_values

    def __hash__(self) -> int:
        return hash(self.feature_values)

    @classmethod
    def from_shape(cls, *sizes: int) -> "Grid":
        """Grid with integer values ``0..size-1`` per feature."""
        return cls([list(range(s)) for s in sizes])


def check_same_grid(*objs) -> Grid:
    grid = objs[0].grid
    for o in objs[1:]:
        if o.grid != grid:
            raise GridMismatchError("objects live on different grids")
    return grid


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Probability mass over the cells of a grid."""

    grid: Grid
    mass: np.ndarray

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float).reshape(self.grid.shape)
        if (mass < 0).any():
            raise ValueError("masses must be nonnegative")
        total = mass.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"masses must sum to 1, got {total!r}")
        object.__setattr__(self, "mass", _freeze(mass))

    @classmethod
    def uniform_on(cls, grid: Grid, mask: np.ndarray) -> "DiscreteDistribution":
        mask = np.asarray(mask, dtype=bool).reshape(grid.shape)
        if not mask.any():
            raise ValueError("cannot build a uniform distribution on an empty mask")
        return cls(grid, mask / mask.sum())

    @classmethod
    def product(cls, grid: Grid, marginals: Sequence[Sequence[float]]) -> "DiscreteDistribution":
        if len(marginals) != grid.d:
            raise ValueError("need one marginal per feature")
        mass = np.ones(())
        for j, m in enumerate(marginals):
            m = np.asarray(m, dtype=float)
            if m.shape != (grid.shape[j],):
                raise ValueError(f"marginal {j} has shape {m.shape}, expected ({grid.shape[j]},)")
            mass = np.multiply.outer(mass, m)
        return cls(grid, mass)


@dataclass(frozen=True, eq=False)
class TabularFunction:
    """A real value per grid cell."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.size != self.grid.n_cells:
            raise ValueError(f"expected {self.grid.n_cells} values, got {values.size}")
        object.__setattr__(self, "values", _freeze(values.reshape(self.grid.shape)))

    def __call__(self, cell: Sequence[int]) -> float:
        return float(self.values[tuple(cell)])

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "TabularFunction":
        """Tabulate ``fn(*feature_values)`` over every cell."""
        vals = [fn(*grid.cell_values(c)) for c in grid.cells()]
        return cls(grid, np.asarray(vals, dtype=float))

    def __add__(self, other: "TabularFunction") -> "TabularFunction":
        check_same_grid(self, other)
        return TabularFunction(self.grid, self.values + other.values)

    def scale(self, a: float) -> "TabularFunction":
        return TabularFunction(self.grid, a * self.values)


@dataclass(frozen=True)
class FeatureSubset:
    """A subset of ``{0, ..., d-1}`` stored as a bitmask."""

    bits: int
    d: int

    def __post_init__(self):
        if not 1 <= self.d <= MAX_FEATURES:
            raise ValueError(f"d must be in [1, {MAX_FEATURES}], got {self.d}")
        if not 0 <= self.bits < (1 << self.d):
            raise ValueError(f"bitmask {self.bits} out of range for d={self.d}")

    @classmethod
    def of(cls, indices: Iterable[int], d: int) -> "FeatureSubset":
        bits = 0
        for i in indices:
            if not 0 <= i < d:
                raise IndexError(f"feature {i} out of range for d={d}")
            bits |= 1 << i
        return cls(bits, d)

    @classmethod
    def full(cls, d: int) -> "FeatureSubset":
        return cls((1 << d) - 1, d)

    @classmethod
    def all_but(cls, i: int, d: int) -> "FeatureSubset":
        return cls.of([j for j in range(d) if j != i], d)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.d) if self.bits >> i & 1)

    def complement(self) -> "FeatureSubset":
        return FeatureSubset(((1 << self.d) - 1) ^ self.bits, self.d)

    def indicator(self) -> np.ndarray:
        return np.array([self.bits >> i & 1 for i in range(self.d)], dtype=float)

    def __contains__(self, i: int) -> bool:
        return bool(self.bits >> i & 1)

    def __len__(self) -> int:
        return bin(self.bits).count("1")

    def __or__(self, other: "FeatureSubset") -> "FeatureSubset":
        return FeatureSubset(self.bits | other.bits, self.d)

    def __and__(self, other: "FeatureSubset") -> "FeatureSubset":
        return FeatureSubset(self.bits & other.bits, self.d)


def as_subset(S, d: int) -> FeatureSubset:
    """Accept a FeatureSubset, an int bitmask, or an iterable of indices."""
    if isinstance(S, FeatureSubset):
        if S.d != d:
            raise ValueError(f"subset is over {S.d} features, expected {d}")
        return S
    if isinstance(S, (int, np.integer)):
        return FeatureSubset(int(S), d)
    return FeatureSubset.of(S, d)


def all_subsets(d: int) -> list[FeatureSubset]:
    return [FeatureSubset(b, d) for b in range(1 << d)]


def subsets_of_size(d: int, k: int) -> list[FeatureSubset]:
    return [FeatureSubset.of(c, d) for c in combinations(range(d), k)]


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ``n x d`` sample matrix."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.ndim == 1:
            rows = rows.reshape(-1, 1)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ValueError("a dataset needs at least one row")
        if rows.shape[1] > MAX_FEATURES:
            raise ValueError(f"at most {MAX_FEATURES} features are supported, got {rows.shape[1]}")
        object.__setattr__(self, "rows", _freeze(rows))

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


def as_dataset(X) -> Dataset:
    return X if isinstance(X, Dataset) else Dataset(X)


def empirical_distribution(data) -> tuple[Grid, DiscreteDistribution]:
    """Grid of distinct column values and the counting distribution of the rows."""
    data = as_dataset(data)
    grid = Grid([np.unique(data.rows[:, j]) for j in range(data.d)])
    idx = grid.locate(data.rows)
    counts = np.zeros(grid.shape)
    np.add.at(counts, tuple(idx.T), 1.0)
    return grid, DiscreteDistribution(grid, counts / data.n)


def marginal(dist: DiscreteDistribution, i: int) -> np.ndarray:
    d = dist.grid.d
    if not 0 <= i < d:
        raise IndexError(f"feature {i} out of range for d={d}")
    return dist.mass.sum(axis=tuple(j for j in range(d) if j != i))


def extended_distribution(dist: DiscreteDistribution) -> DiscreteDistribution:
    """Product of the per-feature marginals of ``dist``."""
    margs = [marginal(dist, i) for i in range(dist.grid.d)]
    mass = np.ones(())
    for m in margs:
        mass = np.multiply.outer(mass, m)
    # renormalize away the O(eps) drift of the outer products
    return DiscreteDistribution(dist.grid, mass / mass.sum())


def is_product(dist: DiscreteDistribution, tol: float = MASS_TOL) -> bool:
    return bool(np.max(np.abs(extended_distribution(dist).mass - dist.mass)) <= tol)


def support_mask(dist: DiscreteDistribution, tol: float = 0.0) -> np.ndarray:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return dist.mass > tol


def extended_support(dist: DiscreteDistribution) -> np.ndarray:
    """Boolean mask of supp(mu*), computed from the marginal supports directly."""
    mask = np.ones((), dtype=bool)
    for i in range(dist.grid.d):
        mask = np.logical_and.outer(mask, marginal(dist, i) > 0)
    return mask


def is_determined(f: TabularFunction, S, mask: np.ndarray, tol: float = 0.0) -> bool:
    """Whether ``f`` depends only on the coordinates in ``S`` over the masked cells.

    Two masked cells that agree on every coordinate in ``S`` must have values
    within ``tol``. With ``S`` empty this asks for ``f`` to be constant on the
    mask. An empty mask is vacuously determined and triggers
    :class:`EmptyMaskWarning`.
    """
    grid = f.grid
    S = as_subset(S, grid.d)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != grid.shape:
        raise GridMismatchError(f"mask shape {mask.shape} does not match grid {grid.shape}")
    if not mask.any():
        warnings.warn("empty mask: determinedness holds vacuously", EmptyMaskWarning, stacklevel=2)
        return True
    # Move the free axes (S^c) to the back and flatten them: each row of the
    # result is one class of cells sharing their S-coordinates.
    free = S.complement().indices
    keep = S.indices
    order = keep + free
    n_keep = int(np.prod([grid.shape[j] for j in keep])) if keep else 1
    vals = np.transpose(f.values, order).reshape(n_keep, -1)
    m = np.transpose(mask, order).reshape(n_keep, -1)
    hi = np.where(m, vals, -np.inf).max(axis=1)
    lo = np.where(m, vals, np.inf).min(axis=1)
    spread = np.where(m.any(axis=1), hi - lo, 0.0)
    return bool(spread.max() <= tol)


# -- JSON (de)serialization ------------------------------------------------


def grid_to_json(grid: Grid) -> dict:
    return {"features": [list(col) for col in grid.feature_values]}


def to_json(grid: Grid, dist: DiscreteDistribution | None = None,
            f: TabularFunction | None = None, **extra) -> dict:
    """Serialize a grid plus an optional distribution and function.

    Arrays are flattened row-major (last feature fastest).
    """
    doc = grid_to_json(grid)
    if dist is not None:
        if dist.grid != grid:
            raise GridMismatchError("distribution grid differs from the document grid")
        doc["mass"] = dist.mass.ravel().tolist()
    if f is not None:
        if f.grid != grid:
            raise GridMismatchError("function grid differs from the document grid")
        doc["values"] = f.values.ravel().tolist()
    doc.update(extra)
    return doc


def grid_from_json(doc: dict) -> Grid:
    if "features" not in doc:
        raise ValueError("JSON document has no 'features' entry")
    return Grid(doc["features"])


def distribution_from_json(doc: dict) -> DiscreteDistribution:
    if "mass" not in doc:
        raise ValueError("JSON document has no 'mass' entry")
    return DiscreteDistribution(grid_from_json(doc), np.asarray(doc["mass"], dtype=float))


def function_from_json(doc: dict) -> TabularFunction:
    if "values" not in doc:
        raise ValueError("JSON document has no 'values' entry")
    return TabularFunction(grid_from_json(doc), np.asarray(doc["values"], dtype=float))


def dump_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
