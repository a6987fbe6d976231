"""Seeded generators for small random grids, distributions and functions."""

from __future__ import annotations

import numpy as np

from .core import (
    DiscreteDistribution,
    Grid,
    TabularFunction,
    extended_distribution,
    extended_support,
)


def random_grid(rng: np.random.Generator, d: int, max_size: int = 3, min_size: int = 1) -> Grid:
    sizes = rng.integers(min_size, max_size + 1, size=d)
    values = [np.sort(rng.choice(np.arange(-5.0, 6.0), size=k, replace=False)) for k in sizes]
    return Grid(values)


def random_distribution(rng: np.random.Generator, grid: Grid, zero_frac: float = 0.4) -> DiscreteDistribution:
    """Random masses with a random fraction of cells zeroed (at least one cell kept)."""
    mass = rng.random(grid.shape) + 0.05
    zero = rng.random(grid.shape) < zero_frac
    if zero.all():
        zero.flat[rng.integers(grid.n_cells)] = False
    mass[zero] = 0.0
    return DiscreteDistribution(grid, mass / mass.sum())


def random_product(rng: np.random.Generator, grid: Grid) -> DiscreteDistribution:
    """Product distribution with strictly positive marginals."""
    marginals = [rng.random(k) + 0.1 for k in grid.shape]
    return DiscreteDistribution.product(grid, [m / m.sum() for m in marginals])


def random_function(rng: np.random.Generator, grid: Grid) -> TabularFunction:
    return TabularFunction(grid, rng.random(grid.shape))


def determined_function(rng: np.random.Generator, grid: Grid, i: int) -> TabularFunction:
    """Random function constant along feature ``i`` everywhere on the grid."""
    shape = list(grid.shape)
    shape[i] = 1
    vals = np.broadcast_to(rng.random(shape), grid.shape)
    return TabularFunction(grid, vals.copy())


def determined_on_extended(rng: np.random.Generator, dist: DiscreteDistribution, i: int) -> TabularFunction:
    """Constant along feature ``i`` on ``supp(mu*)``, arbitrary junk elsewhere."""
    grid = dist.grid
    f = determined_function(rng, grid, i).values.copy()
    junk = ~extended_support(dist)
    f[junk] = rng.random(int(junk.sum())) * 10 - 5
    return TabularFunction(grid, f)


def random_instance(rng: np.random.Generator, d: int, max_size: int = 3):
    """``(grid, mu, mu*, f)`` with ``f`` uniform in ``[0, 1]``."""
    grid = random_grid(rng, d, max_size)
    mu = random_distribution(rng, grid)
    return grid, mu, extended_distribution(mu), random_function(rng, grid)


def multiset_sample(dist_star: DiscreteDistribution, scale: int = 0) -> np.ndarray:
    """Rows enumerating ``supp(dist_star)`` with multiplicities proportional to the mass.

    Requires rational masses ``k / scale``; with ``scale=0`` every support cell
    appears once, which is exact for uniform product distributions.
    """
    grid = dist_star.grid
    cells = np.argwhere(dist_star.mass > 0)
    if scale:
        counts = np.rint(dist_star.mass[tuple(cells.T)] * scale).astype(int)
        if not np.allclose(counts / scale, dist_star.mass[tuple(cells.T)], atol=1e-12, rtol=0):
            raise ValueError("masses are not multiples of 1/scale")
    else:
        counts = np.ones(len(cells), dtype=int)
    cells = np.repeat(cells, counts, axis=0)
    return np.column_stack([np.asarray(grid.feature_values[j])[cells[:, j]] for j in range(grid.d)])


def rational_product(rng: np.random.Generator, grid: Grid, max_count: int = 3) -> tuple[DiscreteDistribution, int]:
    """Product distribution with integer-count marginals; returns it with the common denominator."""
    counts = [rng.integers(1, max_count + 1, size=k) for k in grid.shape]
    scale = int(np.prod([c.sum() for c in counts]))
    dist = DiscreteDistribution.product(grid, [c / c.sum() for c in counts])
    return dist, scale
