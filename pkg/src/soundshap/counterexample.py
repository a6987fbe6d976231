"""Linear-program search for functions whose SHAP values vanish on the data
support even though they depend on the feature.

Variables are the values of ``f`` on the extended-support cells, boxed to
``[0, 1]``. Equality rows are rows of the SHAP operator for the in-support
cells (or all cells in the strengthened mode). The objective is the difference
of ``f`` at two cells that differ only in the feature of interest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DiscreteDistribution,
    Grid,
    TabularFunction,
    extended_support,
    to_json,
)
from .exact import shap_table
from .operators import OperatorMatrix, shap_operator_matrices
from .simplex import OPTIMAL, LPProblem, LPResult, solve_lp

log = logging.getLogger(__name__)


def ring_support(d1: int, d2: int, r_inner: float, r_outer: float) -> np.ndarray:
    """Cells whose normalized distance from the grid center lies in ``[r_inner, r_outer]``.

    Cell centers are mapped to ``[-1, 1]`` per axis, so the edge midpoints of
    the grid sit at distance 1 and the corners at ``sqrt(2)``.
    """
    if not 0 <= r_inner < r_outer:
        raise ValueError("need 0 <= r_inner < r_outer")

    def axis(n):
        return np.zeros(1) if n == 1 else np.linspace(-1.0, 1.0, n)

    u, v = np.meshgrid(axis(d1), axis(d2), indexing="ij")
    dist = np.hypot(u, v)
    mask = (dist >= r_inner - 1e-12) & (dist <= r_outer + 1e-12)
    if not mask.any():
        raise ValueError("ring radii select no cells")
    return mask


@dataclass(frozen=True, eq=False)
class CounterexampleLP:
    problem: LPProblem
    operator: OperatorMatrix  # Phi_i over the extended support; fixes the variable order
    pair: tuple[tuple[int, ...], tuple[int, ...]]
    constrained_rows: np.ndarray


def _pair_cells(op: OperatorMatrix, pair):
    pos = {tuple(c): k for k, c in enumerate(op.basis)}
    try:
        return pos[tuple(pair[0])], pos[tuple(pair[1])]
    except KeyError as exc:
        raise ValueError(f"objective cell {exc.args[0]} is outside the extended support") from None


def build_lp(dist_on_mask: DiscreteDistribution, mask: np.ndarray, i: int, objective_pair,
             full_extended: bool = False, phi: OperatorMatrix | None = None,
             warn_outside: bool = True) -> CounterexampleLP:
    """LP maximizing ``f(a) - f(b)`` subject to ``phi_i(mu, f, x) = 0`` on the mask."""
    a, b = (tuple(int(k) for k in c) for c in objective_pair)
    differ = [j for j in range(len(a)) if a[j] != b[j]]
    if differ != [i]:
        raise ValueError(f"objective cells {a}, {b} must differ exactly in feature {i}")
    mask = np.asarray(mask, dtype=bool)
    if warn_outside and not (mask[a] and mask[b]):
        log.warning("objective pair %s, %s is not inside the support mask", a, b)
    if phi is None:
        phi = shap_operator_matrices(dist_on_mask, i).Phi
    ka, kb = _pair_cells(phi, (a, b))
    if full_extended:
        rows = np.arange(phi.m)
    else:
        rows = np.flatnonzero(mask[tuple(phi.basis.T)])
    c = np.zeros(phi.m)
    c[ka], c[kb] = 1.0, -1.0
    problem = LPProblem(c, phi.matrix[rows], np.zeros(len(rows)), 0.0, 1.0)
    return CounterexampleLP(problem, phi, (a, b), rows)


def admissible_pairs(basis: np.ndarray, i: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Ordered cell pairs differing only in feature ``i``.

    Pairs adjacent along feature ``i`` come first; ties are broken
    lexicographically.
    """
    cells = [tuple(int(k) for k in c) for c in basis]
    pairs = []
    for p, a in enumerate(cells):
        for b in cells[p + 1:]:
            if all(a[j] == b[j] for j in range(len(a)) if j != i) and a[i] != b[i]:
                pairs.append((a, b))
    return sorted(pairs, key=lambda ab: (abs(ab[0][i] - ab[1][i]) != 1, ab))


@dataclass(frozen=True, eq=False)
class CounterexampleReport:
    found: bool
    f: TabularFunction | None
    objective_value: float
    max_abs_shap_on_support: float
    max_abs_shap_on_extended: float
    feature: int
    support: np.ndarray
    pair: tuple | None
    mass: np.ndarray
    pairs_tried: int

    def to_json(self) -> dict:
        grid = self.f.grid if self.f is not None else None
        doc = {
            "found": self.found,
            "objective_value": self.objective_value,
            "max_abs_shap_on_support": self.max_abs_shap_on_support,
            "max_abs_shap_on_extended": self.max_abs_shap_on_extended,
            "feature": self.feature,
            "support": self.support.astype(int).ravel().tolist(),
            "pair": [list(c) for c in self.pair] if self.pair else None,
            "pairs_tried": self.pairs_tried,
        }
        if grid is not None:
            dist = DiscreteDistribution(grid, self.mass)
            doc.update(to_json(grid, dist, self.f))
        return doc


def _normalize(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    return (v - lo) / (hi - lo) if hi - lo > 0 else v - lo


def find_counterexample(grid: Grid, mask: np.ndarray, i: int, mass: np.ndarray | None = None,
                        full_extended: bool = False, threshold: float = 1e-6) -> CounterexampleReport:
    """Search the admissible pairs in order and return the first LP optimum above ``threshold``.

    The returned function is rescaled to span ``[0, 1]``; SHAP values are then
    recomputed from scratch rather than trusted from the solver.
    """
    mask = np.asarray(mask, dtype=bool).reshape(grid.shape)
    if not mask.any():
        raise ValueError("support mask is empty")
    if mass is None:
        dist = DiscreteDistribution.uniform_on(grid, mask)
    else:
        dist = DiscreteDistribution(grid, mass)
        mask = mask & (dist.mass > 0)
    phi = shap_operator_matrices(dist, i).Phi
    ext = extended_support(dist)
    pairs = admissible_pairs(phi.basis, i)
    tried = 0
    for pair in pairs:
        tried += 1
        lp = build_lp(dist, mask, i, pair, full_extended=full_extended, phi=phi,
                      warn_outside=False)
        res: LPResult = solve_lp(lp.problem)
        if res.status != OPTIMAL or res.objective <= threshold:
            continue
        v = _normalize(res.x)
        ka, kb = _pair_cells(phi, pair)
        f = phi.to_function(v)
        table = np.abs(shap_table(dist, f, i))
        return CounterexampleReport(
            found=True,
            f=f,
            objective_value=float(v[ka] - v[kb]),
            max_abs_shap_on_support=float(table[mask].max()),
            max_abs_shap_on_extended=float(table[ext].max()),
            feature=i,
            support=mask,
            pair=pair,
            mass=dist.mass,
            pairs_tried=tried,
        )
    return CounterexampleReport(False, None, 0.0, math.nan, math.nan, i, mask, None, dist.mass, tried)


def max_objective_over_pairs(grid: Grid, mask: np.ndarray, i: int, full_extended: bool = True,
                             mass: np.ndarray | None = None) -> float:
    """Largest LP optimum over every admissible pair (exhaustive)."""
    mask = np.asarray(mask, dtype=bool).reshape(grid.shape)
    dist = DiscreteDistribution.uniform_on(grid, mask) if mass is None else DiscreteDistribution(grid, mass)
    phi = shap_operator_matrices(dist, i).Phi
    best = -np.inf
    for pair in admissible_pairs(phi.basis, i):
        res = solve_lp(build_lp(dist, mask, i, pair, full_extended=full_extended, phi=phi,
                                     warn_outside=False).problem)
        if res.status == OPTIMAL:
            best = max(best, res.objective)
    return float(best)
