"""Dense bounded-variable primal simplex.

Solves ``max c^T x  s.t.  A x = b,  lo <= x <= hi`` with a two-phase method.
Nonbasic variables sit at one of their bounds, so box constraints never become
rows. Entering and leaving variables are chosen with Bland's rule.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class IterationLimitError(RuntimeError):
    """Raised when the pivot count exceeds the cap; carries the basis for debugging."""

    def __init__(self, message: str, basis: list[int], x: np.ndarray):
        super().__init__(f"{message}; basis={basis}")
        self.basis = basis
        self.x = x


@dataclass(frozen=True, eq=False)
class LPProblem:
    """``max objective^T x`` subject to ``A_eq x = b_eq`` and box bounds."""

    objective: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        n = c.size
        A = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        b = np.asarray(self.b_eq, dtype=float).ravel()
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if A.shape[0] != b.size:
            raise ValueError(f"{A.shape[0]} constraint rows but {b.size} right-hand sides")
        if not np.all(np.isfinite(b)) or not np.all(np.isfinite(A)):
            raise ValueError("constraint data must be finite")
        if not np.all(np.isfinite(lo)):
            raise ValueError("lower bounds must be finite")
        if np.any(hi < lo):
            raise ValueError("upper bound below lower bound")
        for name, val in (("objective", c), ("A_eq", A), ("b_eq", b), ("lower", lo), ("upper", hi)):
            object.__setattr__(self, name, val)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @classmethod
    def box(cls, objective, A_eq=None, b_eq=None, lower=0.0, upper=1.0) -> "LPProblem":
        n = np.asarray(objective).size
        A_eq = np.zeros((0, n)) if A_eq is None else A_eq
        b_eq = np.zeros(0) if b_eq is None else b_eq
        return cls(objective, A_eq, b_eq, lower, upper)


@dataclass(frozen=True, eq=False)
class LPResult:
    status: str
    x: np.ndarray | None
    objective: float | None
    iterations: int
    residual: float | None = None


def _simplex(A, b, c, ub, basis, x, max_iter, tol, it0=0):
    """Primal simplex from a feasible basis; mutates ``basis`` and ``x``.

    Variables have lower bound 0 and upper bound ``ub`` (possibly inf).
    Returns ``(status, iterations)``.
    """
    m, n = A.shape
    it = it0
    in_basis = np.zeros(n, dtype=bool)
    in_basis[basis] = True
    while True:
        if it >= max_iter:
            raise IterationLimitError(f"simplex exceeded {max_iter} iterations", list(basis), x.copy())
        nonbasic = ~in_basis
        if m:
            B = A[:, basis]
            x[basis] = np.linalg.solve(B, b - A[:, nonbasic] @ x[nonbasic])
            y = np.linalg.solve(B.T, c[basis])
            reduced = c - A.T @ y
        else:
            reduced = c.copy()
        entering = -1
        for j in range(n):
            if in_basis[j] or ub[j] <= tol:
                continue
            at_upper = np.isfinite(ub[j]) and x[j] >= ub[j] - tol
            if (not at_upper and reduced[j] > tol) or (at_upper and reduced[j] < -tol):
                entering = j
                break
        if entering < 0:
            return OPTIMAL, it
        j = entering
        sigma = -1.0 if (np.isfinite(ub[j]) and x[j] >= ub[j] - tol) else 1.0
        w = np.linalg.solve(A[:, basis], A[:, j]) if m else np.zeros(0)
        step = ub[j]  # bound flip
        leave_pos, leave_to_upper = -1, False
        for k in range(m):
            a = sigma * w[k]
            var = basis[k]
            if a > tol:
                t, to_upper = max(x[var], 0.0) / a, False
            elif a < -tol and np.isfinite(ub[var]):
                t, to_upper = max(ub[var] - x[var], 0.0) / -a, True
            else:
                continue
            if t < step - tol or (abs(t - step) <= tol and leave_pos >= 0 and var < basis[leave_pos]):
                step, leave_pos, leave_to_upper = t, k, to_upper
        if not np.isfinite(step):
            return UNBOUNDED, it
        x[j] += sigma * step
        if m:
            x[basis] -= sigma * step * w
        if leave_pos >= 0:
            var = basis[leave_pos]
            x[var] = ub[var] if leave_to_upper else 0.0
            in_basis[var] = False
            in_basis[j] = True
            basis[leave_pos] = j
        else:
            x[j] = ub[j] if sigma > 0 else 0.0
        it += 1


def solve_lp(problem: LPProblem, max_iter: int = 10_000, tol: float = 1e-9,
             feas_tol: float = 1e-8) -> LPResult:
    lo, hi = problem.lower, problem.upper
    A = problem.A_eq
    c = problem.objective
    m, n = A.shape
    ub = hi - lo
    b = problem.b_eq - A @ lo
    x = np.zeros(n)

    # phase 1: artificials absorb the residual of x = 0
    signs = np.where(b >= 0, 1.0, -1.0)
    A1 = np.hstack([A, np.diag(signs)])
    c1 = np.concatenate([np.zeros(n), -np.ones(m)])
    ub1 = np.concatenate([ub, np.full(m, np.inf)])
    x1 = np.concatenate([x, np.abs(b)])
    basis = list(range(n, n + m))
    _, it = _simplex(A1, b, c1, ub1, basis, x1, max_iter, tol)
    if x1[n:].sum() > feas_tol:
        return LPResult(INFEASIBLE, None, None, it)

    # drive zero-level artificials out of the basis; drop redundant rows
    rows = list(range(m))
    k = 0
    while k < len(basis):
        if basis[k] < n:
            k += 1
            continue
        B = A1[np.ix_(rows, basis)]
        coeffs = np.linalg.solve(B, A1[rows][:, :n])[k]
        cand = [j for j in range(n) if j not in basis and abs(coeffs[j]) > 1e-9]
        if cand:
            basis[k] = cand[0]
            k += 1
        else:
            # tableau row k vanishes on real columns: the artificial's own row is redundant
            rows.remove(basis[k] - n)
            del basis[k]
    x = x1[:n]
    A2 = A[rows]
    status, it = _simplex(A2, b[rows], c.copy(), ub, basis, x, max_iter, tol, it)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, None, None, it)
    x = np.clip(x, 0.0, ub) + lo
    residual = float(np.max(np.abs(A @ x - problem.b_eq))) if m else 0.0
    return LPResult(OPTIMAL, x, float(c @ x), it, residual)


def brute_force_lp(problem: LPProblem, tol: float = 1e-9) -> LPResult:
    """Enumerate every basic solution of a small bounded LP and keep the best.

    Independent check for :func:`solve_lp`; exponential in the number of variables.
    """
    lo, hi = problem.lower, problem.upper
    if not np.all(np.isfinite(hi)):
        raise ValueError("vertex enumeration needs finite bounds")
    A, b, c = problem.A_eq, problem.b_eq, problem.objective
    m, n = A.shape
    if m:
        r = np.linalg.matrix_rank(A)
        if np.linalg.matrix_rank(np.column_stack([A, b])) > r:
            return LPResult(INFEASIBLE, None, None, 0)
        # keep r independent rows
        keep: list[int] = []
        for k in range(m):
            if np.linalg.matrix_rank(A[keep + [k]]) > len(keep):
                keep.append(k)
        A, b = A[keep], b[keep]
    else:
        r = 0
    best_x, best_val, checked = None, -np.inf, 0
    for cols in itertools.combinations(range(n), r):
        cols = list(cols)
        if r and abs(np.linalg.det(A[:, cols])) < 1e-12:
            continue
        rest = [j for j in range(n) if j not in cols]
        for corner in itertools.product((0, 1), repeat=len(rest)):
            x = np.empty(n)
            x[rest] = np.where(corner, hi[rest], lo[rest])
            if r:
                x[cols] = np.linalg.solve(A[:, cols], b - A[:, rest] @ x[rest])
            checked += 1
            if np.all(x >= lo - tol) and np.all(x <= hi + tol):
                val = float(c @ x)
                if val > best_val:
                    best_x, best_val = x, val
    if best_x is None:
        return LPResult(INFEASIBLE, None, None, checked)
    return LPResult(OPTIMAL, best_x, best_val, checked)
