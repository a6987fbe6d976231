"""Value and SHAP operators as dense matrices on functions over the extended support.

The basis of every operator is the list of cells in ``supp(mu*)`` in row-major
order. Functions are turned into vectors over that basis with
:meth:`OperatorMatrix.vec`.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg

from .core import (
    DiscreteDistribution,
    FeatureSubset,
    Grid,
    TabularFunction,
    all_subsets,
    as_subset,
    extended_support,
    is_determined,
    is_product,
)
from .exact import shapley_weight


class NotProductError(ValueError):
    """The distribution was expected to be its own extended distribution."""


class ReconstructionError(RuntimeError):
    pass


class DerivedSeriesBlowUp(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """A linear map on functions restricted to the extended support."""

    matrix: np.ndarray
    basis: np.ndarray  # m x d cell indices, row-major order
    grid: Grid

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def vec(self, f: TabularFunction | np.ndarray) -> np.ndarray:
        values = f.values if isinstance(f, TabularFunction) else np.asarray(f).reshape(self.grid.shape)
        return values[tuple(self.basis.T)]

    def to_function(self, v: np.ndarray, fill: float = 0.0) -> TabularFunction:
        out = np.full(self.grid.shape, fill, dtype=float)
        out[tuple(self.basis.T)] = v
        return TabularFunction(self.grid, out)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.grid.shape, dtype=bool)
        out[tuple(self.basis.T)] = True
        return out

    def apply(self, f: TabularFunction | np.ndarray) -> np.ndarray:
        return self.matrix @ self.vec(f)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.matrix @ other.matrix, self.basis, self.grid)


def support_basis(dist: DiscreteDistribution) -> np.ndarray:
    """Cells of ``supp(mu*)`` as an ``m x d`` index array."""
    return np.argwhere(extended_support(dist))


def value_operator_matrix(dist: DiscreteDistribution, S) -> OperatorMatrix:
    """Matrix of ``f -> v_S(dist, f, .)`` over ``supp(dist*)``.

    Entry ``[x, y]`` is ``1(y_S = x_S) * P_dist[X_{S^c} = y_{S^c}]``.
    """
    grid = dist.grid
    S = as_subset(S, grid.d)
    basis = support_basis(dist)
    s_idx = list(S.indices)
    free = list(S.complement().indices)
    if s_idx:
        same = np.all(basis[:, None, s_idx] == basis[None, :, s_idx], axis=-1)
    else:
        same = np.ones((len(basis), len(basis)), dtype=bool)
    if free:
        m_free = dist.mass.sum(axis=tuple(s_idx)) if s_idx else dist.mass
        w = m_free[tuple(basis[:, free].T)]
    else:
        w = np.ones(len(basis))
    return OperatorMatrix(same * w[None, :], basis, grid)


def value_operators(dist: DiscreteDistribution) -> dict[int, OperatorMatrix]:
    """All ``2^d`` value operators keyed by bitmask."""
    return {S.bits: value_operator_matrix(dist, S) for S in all_subsets(dist.grid.d)}


@dataclass(frozen=True, eq=False)
class ShapOperators:
    A: OperatorMatrix
    B: OperatorMatrix
    Phi: OperatorMatrix

    def __iter__(self):
        return iter((self.A, self.B, self.Phi))


def shap_operator_matrices(dist: DiscreteDistribution, i: int,
                           ops: dict[int, OperatorMatrix] | None = None) -> ShapOperators:
    """``A_i``, ``B_i`` and ``Phi_i = A_i - B_i`` for feature ``i``."""
    d = dist.grid.d
    if not 0 <= i < d:
        raise IndexError(f"feature {i} out of range for d={d}")
    if ops is None:
        ops = value_operators(dist)
    first = ops[0]
    A = np.zeros_like(first.matrix)
    B = np.zeros_like(first.matrix)
    for bits in range(1 << d):
        if bits >> i & 1:
            continue
        w = shapley_weight(d, bin(bits).count("1"))
        A += w * ops[bits | 1 << i].matrix
        B += w * ops[bits].matrix
    mk = lambda M: OperatorMatrix(M, first.basis, first.grid)
    return ShapOperators(mk(A), mk(B), mk(A - B))


# -- spectra ---------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    min_real: float
    max_imag_abs: float
    lower_bound: float
    tol: float = 1e-8

    @property
    def violation(self) -> bool:
        return self.min_real < self.lower_bound - self.tol or self.max_imag_abs > self.tol


def spectrum_check(A: OperatorMatrix | np.ndarray, d: int, tol: float = 1e-8) -> SpectrumReport:
    """Eigenvalues of an ``A_i`` matrix against the bound ``lambda >= 1/d``.

    ``numpy.linalg.LinAlgError`` from a non-converging eigensolver propagates.
    """
    M = A.matrix if isinstance(A, OperatorMatrix) else np.asarray(A)
    ev = np.linalg.eigvals(M)
    return SpectrumReport(
        eigenvalues=ev,
        min_real=float(ev.real.min()),
        max_imag_abs=float(np.abs(ev.imag).max()),
        lower_bound=1.0 / d,
        tol=tol,
    )


def _require_product(dist: DiscreteDistribution) -> None:
    if not is_product(dist):
        raise NotProductError("distribution is not a product of its marginals")


def hermitian_check(dist_star: DiscreteDistribution, S) -> float:
    """Max entry of ``|D M_S - (D M_S)^T|`` with ``D = diag(mu*)``.

    Zero means ``v_S`` is self-adjoint under the ``mu*``-weighted inner product.
    """
    _require_product(dist_star)
    op = value_operator_matrix(dist_star, S)
    D = dist_star.mass[tuple(op.basis.T)]
    DM = D[:, None] * op.matrix
    return float(np.max(np.abs(DM - DM.T)))


# -- Lie algebra -----------------------------------------------------------


def _span_basis(vectors: np.ndarray, rank_tol: float) -> np.ndarray:
    """Orthonormal basis (as rows) for the row span of ``vectors``.

    Column-pivoted QR; a direction counts if its pivot exceeds ``rank_tol``
    times the largest vector norm (floored at 1, since inputs are built from
    orthonormal elements and exact zeros must not be promoted by the scaling).
    """
    if len(vectors) == 0:
        return vectors
    Q, R, _ = scipy.linalg.qr(vectors.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = max(float(np.linalg.norm(vectors, axis=1).max()), 1.0)
    r = int(np.sum(diag > rank_tol * scale))
    return Q[:, :r].T.copy()


def _brackets(basis: np.ndarray, m: int) -> np.ndarray:
    mats = basis.reshape(-1, m, m)
    out = [(mats[a] @ mats[b] - mats[b] @ mats[a]).ravel()
           for a, b in combinations(range(len(mats)), 2)]
    return np.asarray(out).reshape(-1, m * m)


@dataclass(frozen=True)
class DerivedSeriesReport:
    dims: list[int]
    vanish_level: int | None
    generator_span_dim: int

    def __post_init__(self):
        if any(b > a for a, b in zip(self.dims, self.dims[1:])):
            raise ValueError(f"derived series dimensions increased: {self.dims}")


def lie_closure(generators: np.ndarray, m: int, rank_tol: float = 1e-9,
                max_dim: int = 2000) -> np.ndarray:
    """Orthonormal basis of the Lie algebra generated by the given matrices."""
    basis = _span_basis(generators, rank_tol)
    while True:
        if len(basis) > max_dim:
            raise DerivedSeriesBlowUp(f"Lie closure exceeded {max_dim} dimensions (m={m})")
        grown = _span_basis(np.vstack([basis, _brackets(basis, m)]), rank_tol)
        if len(grown) == len(basis):
            return basis
        basis = grown


def derived_series(dist: DiscreteDistribution, max_level: int | None = None,
                   rank_tol: float = 1e-9, max_dim: int = 2000,
                   max_m: int = 64) -> DerivedSeriesReport:
    """Dimensions of the derived series of the Lie algebra generated by the value operators.

    Level 0 is the Lie closure of ``{v_S}``; level ``k`` is spanned by the
    commutators of level ``k-1``.
    """
    d = dist.grid.d
    if max_level is None:
        max_level = d + 1
    if max_level < d + 1:
        raise ValueError(f"max_level must be at least d+1 = {d + 1}")
    ops = value_operators(dist)
    m = ops[0].m
    if m > max_m:
        raise ValueError(f"extended support has {m} cells, at most {max_m} supported")
    gens = np.asarray([op.matrix.ravel() for op in ops.values()])
    gen_dim = len(_span_basis(gens, rank_tol))
    level = lie_closure(gens, m, rank_tol, max_dim)
    dims = [len(level)]
    vanish = 0 if len(level) == 0 else None
    for k in range(1, max_level + 1):
        if vanish is not None:
            break
        level = _span_basis(_brackets(level, m), rank_tol)
        dims.append(len(level))
        if len(level) == 0:
            vanish = k
    return DerivedSeriesReport(dims=dims, vanish_level=vanish, generator_span_dim=gen_dim)


# -- reconstruction of a determined approximation -------------------------------


def collapse_basis(op: OperatorMatrix, i: int) -> np.ndarray:
    """Indicator matrix (m x k) of the classes of basis cells that agree off feature ``i``.

    Its columns span the functions that do not depend on feature ``i``.
    """
    rest = [j for j in range(op.grid.d) if j != i]
    keys = [tuple(row) for row in op.basis[:, rest]]
    classes = {k: n for n, k in enumerate(dict.fromkeys(keys))}
    E = np.zeros((op.m, len(classes)))
    E[np.arange(op.m), [classes[k] for k in keys]] = 1.0
    return E


def reconstruct_determined(dist_star: DiscreteDistribution, f: TabularFunction, i: int,
                           coefficients: np.ndarray | None = None,
                           max_cond: float = 1e12) -> TabularFunction:
    """Approximate ``f`` by a function that ignores feature ``i``.

    Solves ``A|_W g = B f`` on the subspace ``W`` of functions not depending on
    feature ``i``, where ``A`` and ``B`` collect the value operators with and
    without ``i``. By default the Shapley coefficients are used; pass the
    per-subset ``coefficients`` (indexed by bitmask) to use another linear
    combination, e.g. the KernelSHAP decomposition. The result is zero outside
    ``supp(mu*)``.
    """
    _require_product(dist_star)
    d = dist_star.grid.d
    ops = value_operators(dist_star)
    if coefficients is None:
        A, B, _ = shap_operator_matrices(dist_star, i, ops)
        A, B = A.matrix, B.matrix
        shift = 0.0
    else:
        coefficients = np.asarray(coefficients, dtype=float)
        A = sum(coefficients[b] * ops[b].matrix for b in range(1 << d) if b >> i & 1)
        B = -sum(coefficients[b] * ops[b].matrix for b in range(1 << d) if not b >> i & 1)
        # coefficient decompositions may assume a centered f; constants are in W
        shift = float(np.sum(ops[0].matrix[0] * ops[0].vec(f)))
    base = ops[0]
    fv = base.vec(f) - shift
    E = collapse_basis(base, i)
    counts = E.sum(axis=0)
    A_W = (E.T @ A @ E) / counts[:, None]
    rhs = (E.T @ (B @ fv)) / counts
    cond = np.linalg.cond(A_W)
    if not np.isfinite(cond) or cond > max_cond:
        raise ReconstructionError(f"restricted system is ill-conditioned (cond={cond:.3g})")
    c = scipy.linalg.solve(A_W, rhs)
    return base.to_function(E @ c + shift)


def l2_distance_sq(dist_star: DiscreteDistribution, f: TabularFunction, g: TabularFunction) -> float:
    """``integral (f - g)^2 dmu*``."""
    return float(np.sum(dist_star.mass * (f.values - g.values) ** 2))


def l1_l2_bound_check(dist_star: DiscreteDistribution, f: TabularFunction, i: int,
                      range_tol: float = 1e-12) -> tuple[float, float]:
    """``(<Phi*f, Phi*f>, aggregate |Phi*f|)`` under ``mu*``; the first never exceeds the second.

    Requires ``0 <= f <= 1`` on the extended support.
    """
    _require_product(dist_star)
    _, _, Phi = shap_operator_matrices(dist_star, i)
    fv = Phi.vec(f)
    if fv.min() < -range_tol or fv.max() > 1 + range_tol:
        raise ValueError("f must take values in [0, 1] on the extended support")
    phi = Phi.matrix @ fv
    w = dist_star.mass[tuple(Phi.basis.T)]
    return float(np.sum(w * phi ** 2)), float(np.sum(w * np.abs(phi)))


def determined_on_extended_support(dist: DiscreteDistribution, f: TabularFunction, i: int,
                                   tol: float) -> bool:
    """Whether feature ``i`` can be discarded for ``f`` over ``supp(mu*)``."""
    return is_determined(f, FeatureSubset.all_but(i, dist.grid.d), extended_support(dist), tol)
