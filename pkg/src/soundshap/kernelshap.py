"""KernelSHAP: sampled and fully enumerated regressions, the limit object, and
column scrambling of a data matrix."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg

from .core import (
    Dataset,
    DiscreteDistribution,
    Grid,
    GridMismatchError,
    TabularFunction,
    as_dataset,
    check_same_grid,
    is_product,
)
from .exact import pascal_row, value_function


class SingularRegressionError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KernelShapConfig:
    mode: Literal["sampled", "full_enumeration"] = "full_enumeration"
    num_subset_samples: int = 2048
    rng_seed: int = 0
    center_f: bool = False

    def validate(self, d: int) -> None:
        if d < 2:
            raise ValueError("KernelSHAP needs d >= 2 (the subset kernel is empty for d = 1)")
        if self.mode not in ("sampled", "full_enumeration"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "sampled" and self.num_subset_samples < d:
            raise ValueError(f"sampled mode needs at least d={d} subset samples")


@dataclass(frozen=True)
class KernelShapReport:
    per_feature: tuple[float, ...]
    mode: str
    target_sum: float  # f(x) - fbar, enforced exactly by the closed form

    @property
    def sum_gap(self) -> float:
        return abs(sum(self.per_feature) - self.target_sum)


def pi_weights(d: int) -> np.ndarray:
    """Shapley-kernel sampling probabilities over all ``2^d`` subsets, indexed by bitmask."""
    if d < 2:
        raise ValueError("the subset kernel needs d >= 2")
    binom = pascal_row(d)
    w = np.zeros(1 << d)
    for bits in range(1, (1 << d) - 1):
        k = bin(bits).count("1")
        w[bits] = (d - 1) / (binom[k] * k * (d - k))
    return w / w.sum()


def _indicators(d: int) -> np.ndarray:
    bits = np.arange(1 << d)
    return ((bits[:, None] >> np.arange(d)) & 1).astype(float)


@dataclass(frozen=True)
class MReport:
    M: np.ndarray
    p: float
    q: float
    p_closed_form: float
    q_closed_form: float


def M_matrix(d: int) -> MReport:
    """``E_pi[1_S 1_S^T]`` by enumeration, with ``p``/``q`` read off it.

    The closed-form ``p``, ``q`` are reported alongside; they are not used.
    """
    pi = pi_weights(d)
    ind = _indicators(d)
    M = (ind * pi[:, None]).T @ ind
    q = float(M[0, 1])
    p = float(M[0, 0] - q)
    num = sum((d - 1) / (d - k) for k in range(2, d))
    den = sum(1.0 / (k * (d - k)) for k in range(1, d))
    q_cf = num / den / (d * (d - 1))
    return MReport(M=M, p=p, q=q, p_closed_form=0.5 - q_cf, q_closed_form=q_cf)


def solve_pq(p: float, q: float, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(p I + q J) z = rhs`` with the Sherman-Morrison form of the inverse."""
    rhs = np.asarray(rhs, dtype=float)
    d = rhs.shape[0]
    return rhs / p - q / (p * (p + q * d)) * rhs.sum(axis=0)


def constrained_solution(M: np.ndarray, b: np.ndarray, target: float) -> np.ndarray:
    """``M^-1 (b - 1 (1^T M^-1 b - target) / (1^T M^-1 1))``.

    The minimizer of the weighted regression under ``sum(K) = target``.
    """
    d = M.shape[0]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(M, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularRegressionError(str(exc)) from exc
    if np.min(np.abs(np.diag(lu[0]))) <= 1e-12 * max(1.0, np.abs(M).max()):
        raise SingularRegressionError("subset design matrix is singular; draw more subset samples")
    ones = np.ones(d)
    Minv_b = scipy.linalg.lu_solve(lu, b)
    Minv_1 = scipy.linalg.lu_solve(lu, ones)
    return Minv_b - Minv_1 * (ones @ Minv_b - target) / (ones @ Minv_1)


def _cells_of(X: Dataset, grid: Grid) -> np.ndarray:
    if X.d != grid.d:
        raise GridMismatchError(f"dataset has {X.d} columns, grid has {grid.d} features")
    return grid.locate(X.rows)


def _mixed_values(f: TabularFunction, x: tuple[int, ...], bg: np.ndarray, bits: int) -> np.ndarray:
    """``f(x_S, bg_{S^c})`` for every background row."""
    d = f.grid.d
    idx = bg.copy()
    for j in range(d):
        if bits >> j & 1:
            idx[:, j] = x[j]
    return f.values[tuple(idx.T)]


def kernelshap_point(X, f: TabularFunction, x, cfg: KernelShapConfig = KernelShapConfig(),
                     _cells: np.ndarray | None = None) -> KernelShapReport:
    """KernelSHAP values at cell ``x`` with the rows of ``X`` as background.

    ``sampled`` draws subsets from the Shapley kernel and pairs the ``j``-th
    subset with background row ``j mod n``. ``full_enumeration`` replaces both
    averages by their exact values: every subset with its kernel weight,
    against the mean over all background rows.
    """
    X = as_dataset(X)
    grid = f.grid
    d = grid.d
    cfg.validate(d)
    x = grid.check_cell(x)
    bg = _cells_of(X, grid) if _cells is None else _cells
    fv = f.values
    shift = float(fv[tuple(bg.T)].mean()) if cfg.center_f else 0.0
    fbar = float(fv[tuple(bg.T)].mean()) - shift
    fx = float(fv[x]) - shift
    if cfg.mode == "full_enumeration":
        pi = pi_weights(d)
        ind = _indicators(d)
        M = (ind * pi[:, None]).T @ ind
        b = np.zeros(d)
        for bits in range(1, (1 << d) - 1):
            vs = _mixed_values(f, x, bg, bits).mean() - shift
            b += pi[bits] * ind[bits] * (vs - fbar)
    else:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, *x]))
        pi = pi_weights(d)
        subsets = rng.choice(1 << d, size=cfg.num_subset_samples, p=pi)
        ind = _indicators(d)[subsets]
        rows = bg[np.arange(cfg.num_subset_samples) % X.n]
        idx = np.where(ind.astype(bool), np.asarray(x)[None, :], rows)
        y = fv[tuple(idx.T)] - shift - fbar
        M = ind.T @ ind / len(subsets)
        b = ind.T @ y / len(subsets)
    K = constrained_solution(M, b, fx - fbar)
    return KernelShapReport(per_feature=tuple(float(k) for k in K), mode=cfg.mode, target_sum=fx - fbar)


def kernelshap_limit(dist: DiscreteDistribution, f: TabularFunction, x) -> KernelShapReport:
    """Limit object of KernelSHAP at ``x`` with exact subset and background expectations."""
    grid = check_same_grid(dist, f)
    d = grid.d
    if d < 2:
        raise ValueError("KernelSHAP needs d >= 2")
    x = grid.check_cell(x)
    pi = pi_weights(d)
    ind = _indicators(d)
    M = (ind * pi[:, None]).T @ ind
    v_empty = value_function(dist, f, x, 0)
    b = np.zeros(d)
    for bits in range(1, (1 << d) - 1):
        b += pi[bits] * ind[bits] * (value_function(dist, f, x, bits) - v_empty)
    target = f(x) - v_empty
    K = constrained_solution(M, b, target)
    return KernelShapReport(per_feature=tuple(float(k) for k in K), mode="limit", target_sum=target)


def scramble_columns(X, rng_seed: int) -> Dataset:
    """Permute every column independently (one child RNG stream per column)."""
    X = as_dataset(X)
    streams = np.random.SeedSequence(rng_seed).spawn(X.d)
    cols = [np.random.Generator(np.random.PCG64(s)).permutation(X.rows[:, j])
            for j, s in enumerate(streams)]
    return Dataset(np.column_stack(cols))


def kernelshap_rows(X, f: TabularFunction, cfg: KernelShapConfig = KernelShapConfig()) -> np.ndarray:
    """``n x d`` array of KernelSHAP values at every row of ``X`` (background ``X``)."""
    X = as_dataset(X)
    cells = _cells_of(X, f.grid)
    return np.array([kernelshap_point(X, f, tuple(c), cfg, _cells=cells).per_feature for c in cells])


def aggregate_kernelshap(X, f: TabularFunction, i: int, cfg: KernelShapConfig = KernelShapConfig()) -> float:
    if not 0 <= i < f.grid.d:
        raise IndexError(f"feature {i} out of range for d={f.grid.d}")
    return float(np.mean(np.abs(kernelshap_rows(X, f, cfg)[:, i])))


def limit_aggregates(dist_star: DiscreteDistribution, f: TabularFunction) -> np.ndarray:
    """``E_{x~mu*} |K_i(mu*, f, x)|`` for every feature ``i``."""
    out = np.zeros(f.grid.d)
    for cell in zip(*np.nonzero(dist_star.mass > 0)):
        out += dist_star.mass[cell] * np.abs(kernelshap_limit(dist_star, f, cell).per_feature)
    return out


def eta_estimate(X_star, dist_star: DiscreteDistribution, f: TabularFunction,
                 cfg: KernelShapConfig = KernelShapConfig()) -> float:
    """Worst-feature gap between the empirical and limit aggregate KernelSHAP values."""
    check_same_grid(dist_star, f)
    if not is_product(dist_star):
        raise ValueError("eta is defined against a product (extended) distribution")
    emp = np.mean(np.abs(kernelshap_rows(X_star, f, cfg)), axis=0)
    return float(np.max(np.abs(emp - limit_aggregates(dist_star, f))))


@dataclass(frozen=True)
class IotaReport:
    feature: int
    coefficients: np.ndarray  # indexed by subset bitmask
    p: float
    q: float
    max_reconstruction_error: float

    @property
    def iota_full(self) -> float:
        return float(self.coefficients[-1])

    @property
    def min_iota_containing(self) -> float:
        return float(min(c for b, c in enumerate(self.coefficients) if b >> self.feature & 1))


def iota_coefficients(d: int, i: int) -> tuple[np.ndarray, float, float]:
    """Coefficients writing the KernelSHAP limit operator for feature ``i`` as a
    combination of value operators (valid for mean-zero ``f``)."""
    mr = M_matrix(d)
    p, q = mr.p, mr.q
    pi = pi_weights(d)
    iota = np.zeros(1 << d)
    for bits in range(1 << d):
        size = bin(bits).count("1")
        common = size * pi[bits] / (d * (p + d * q))
        if bits == (1 << d) - 1:
            iota[bits] = 1.0 / d
        elif bits >> i & 1:
            iota[bits] = (1.0 / p - q * size / (p * (p + d * q))) * pi[bits] - common
        else:
            iota[bits] = -(q * size / (p * (p + d * q))) * pi[bits] - common
    return iota, p, q


class DecompositionMismatch(RuntimeError):
    pass


def iota_decomposition(dist_star: DiscreteDistribution, i: int, n_checks: int = 20,
                       seed: int = 0, tol: float = 1e-9) -> IotaReport:
    """Coefficients of the KernelSHAP limit operator and a numerical check.

    For ``n_checks`` random mean-zero functions, ``sum_S iota_S v_S f`` is
    compared against :func:`kernelshap_limit` on every extended-support cell.
    Disagreement beyond ``tol`` raises :class:`DecompositionMismatch`.
    """
    from .operators import value_operators

    d = dist_star.grid.d
    if d < 2:
        raise ValueError("KernelSHAP needs d >= 2")
    if not 0 <= i < d:
        raise IndexError(f"feature {i} out of range for d={d}")
    iota, p, q = iota_coefficients(d, i)
    ops = value_operators(dist_star)
    K_op = sum(iota[b] * ops[b].matrix for b in range(1 << d))
    base = ops[0]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_checks):
        vals = rng.random(dist_star.grid.shape)
        f = TabularFunction(dist_star.grid, vals)
        fv = base.vec(f)
        fv = fv - ops[0].matrix[0] @ fv
        via_ops = K_op @ fv
        centered = base.to_function(fv)
        direct = np.array([kernelshap_limit(dist_star, centered, tuple(c)).per_feature[i] for c in base.basis])
        worst = max(worst, float(np.max(np.abs(via_ops - direct))))
    if worst > tol:
        raise DecompositionMismatch(f"value-operator form disagrees with the limit object by {worst:.3g}")
    return IotaReport(feature=i, coefficients=iota, p=p, q=q, max_reconstruction_error=worst)
