"""Exact interventional value functions and SHAP values by full enumeration."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    DiscreteDistribution,
    FeatureSubset,
    TabularFunction,
    as_subset,
    check_same_grid,
)

# Canary used by `soundshap verify --inject-fault`: when set, the weight of the
# empty coalition is negated so that the efficiency check must fail.
_negate_empty_weight = False


@contextlib.contextmanager
def negated_empty_weight():
    """Temporarily corrupt the Shapley weight of ``S = {}`` (fault injection)."""
    global _negate_empty_weight
    old = _negate_empty_weight
    _negate_empty_weight = True
    try:
        yield
    finally:
        _negate_empty_weight = old


@lru_cache(maxsize=None)
def pascal_row(n: int) -> tuple[int, ...]:
    """Binomial coefficients ``C(n, 0..n)`` as exact integers."""
    row = [1]
    for _ in range(n):
        row = [1] + [a + b for a, b in zip(row, row[1:])] + [1]
    return tuple(row)


def shapley_weight(d: int, size: int) -> float:
    """``1 / (d * C(d-1, size))``, the weight of a coalition of ``size`` features not containing i."""
    w = 1.0 / (d * pascal_row(d - 1)[size])
    if size == 0 and _negate_empty_weight:
        w = -w
    return w


def _check_feature(i: int, d: int) -> None:
    if not 0 <= i < d:
        raise IndexError(f"feature {i} out of range for d={d}")


def value_function(dist: DiscreteDistribution, f: TabularFunction, x, S) -> float:
    """``E_{X~dist}[f(x_S, X_{S^c})]`` summed exactly over the grid."""
    grid = check_same_grid(dist, f)
    x = grid.check_cell(x)
    S = as_subset(S, grid.d)
    fixed = S.indices
    idx = tuple(x[j] if j in S else slice(None) for j in range(grid.d))
    f_slice = f.values[idx]  # axes: S^c in order
    m_free = dist.mass.sum(axis=fixed) if fixed else dist.mass
    return float(np.sum(f_slice * m_free))


def value_table(dist: DiscreteDistribution, f: TabularFunction, S) -> np.ndarray:
    """``v_S(dist, f, x)`` for every cell ``x`` at once, shaped like the grid."""
    grid = check_same_grid(dist, f)
    S = as_subset(S, grid.d)
    free = S.complement().indices
    if not free:
        return f.values.copy()
    m_free = dist.mass.sum(axis=S.indices) if S.indices else dist.mass
    # contract f's free axes against the free marginal; result lives on S axes
    reduced = np.tensordot(f.values, m_free, axes=(list(free), list(range(len(free)))))
    shape = [grid.shape[j] if j in S else 1 for j in range(grid.d)]
    return np.broadcast_to(reduced.reshape(shape), grid.shape).copy()


def shap_value(dist: DiscreteDistribution, f: TabularFunction, x, i: int) -> float:
    grid = check_same_grid(dist, f)
    d = grid.d
    _check_feature(i, d)
    x = grid.check_cell(x)
    total = 0.0
    for bits in range(1 << d):
        if bits >> i & 1:
            continue
        S = FeatureSubset(bits, d)
        diff = value_function(dist, f, x, FeatureSubset(bits | 1 << i, d)) - value_function(dist, f, x, S)
        total += shapley_weight(d, len(S)) * diff
    return total


@dataclass(frozen=True)
class ShapReport:
    point: tuple[int, ...]
    per_feature: tuple[float, ...]
    base_value: float
    f_value: float

    @property
    def efficiency_gap(self) -> float:
        return abs(sum(self.per_feature) - (self.f_value - self.base_value))


def shap_all(dist: DiscreteDistribution, f: TabularFunction, x) -> ShapReport:
    """All ``d`` SHAP values at ``x``, sharing one value-function cache."""
    grid = check_same_grid(dist, f)
    d = grid.d
    x = grid.check_cell(x)
    cache: dict[int, float] = {}

    def v(bits: int) -> float:
        if bits not in cache:
            cache[bits] = value_function(dist, f, x, FeatureSubset(bits, d))
        return cache[bits]

    phi = []
    for i in range(d):
        total = 0.0
        for bits in range(1 << d):
            if bits >> i & 1:
                continue
            size = bin(bits).count("1")
            total += shapley_weight(d, size) * (v(bits | 1 << i) - v(bits))
        phi.append(total)
    return ShapReport(point=x, per_feature=tuple(phi), base_value=v(0), f_value=f(x))


def shap_table(dist: DiscreteDistribution, f: TabularFunction, i: int) -> np.ndarray:
    """``phi_i(dist, f, x)`` for every cell, vectorized over ``x``."""
    grid = check_same_grid(dist, f)
    d = grid.d
    _check_feature(i, d)
    tables = {}
    out = np.zeros(grid.shape)
    for bits in range(1 << d):
        if bits >> i & 1:
            continue
        for b in (bits, bits | 1 << i):
            if b not in tables:
                tables[b] = value_table(dist, f, b)
        out += shapley_weight(d, bin(bits).count("1")) * (tables[bits | 1 << i] - tables[bits])
    return out


def aggregate_shap(weight_dist: DiscreteDistribution, value_dist: DiscreteDistribution,
                   f: TabularFunction, i: int) -> float:
    """Mean absolute SHAP value of feature ``i``.

    ``weight_dist`` is the averaging measure, ``value_dist`` the measure inside
    the value function. Passing the same distribution twice gives the usual
    aggregate; passing ``mu*`` twice gives the extended-distribution aggregate.
    """
    check_same_grid(weight_dist, value_dist, f)
    phi = shap_table(value_dist, f, i)
    w = weight_dist.mass
    return float(np.sum(w[w > 0] * np.abs(phi[w > 0])))
