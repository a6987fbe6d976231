"""Seeded battery of numerical checks over random small instances.

Each check draws its instances from ``SeedSequence([seed, k])`` so a failing
instance ``k`` can be replayed on its own.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import exact
from .core import (
    FeatureSubset,
    Grid,
    TabularFunction,
    all_subsets,
    extended_distribution,
    extended_support,
    is_determined,
)
from .counterexample import find_counterexample, max_objective_over_pairs, ring_support
from .kernelshap import (
    KernelShapConfig,
    M_matrix,
    aggregate_kernelshap,
    eta_estimate,
    iota_coefficients,
    iota_decomposition,
    kernelshap_limit,
    scramble_columns,
)
from .operators import (
    derived_series,
    hermitian_check,
    l1_l2_bound_check,
    l2_distance_sq,
    reconstruct_determined,
    shap_operator_matrices,
    spectrum_check,
    value_operator_matrix,
)
from .random_instances import (
    determined_on_extended,
    multiset_sample,
    random_distribution,
    random_function,
    random_grid,
    random_instance,
    random_product,
    rational_product,
)
from .simplex import LPProblem, brute_force_lp, solve_lp


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float  # largest violation margin or error seen; meaning depends on the check
    tolerance: float
    instances: int
    failing: list[int] = field(default_factory=list)
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst": self.worst,
            "tolerance": self.tolerance,
            "instances": self.instances,
            "failing_instances": self.failing,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class VerifyConfig:
    seed: int = 0
    d: int | None = None  # restrict random instances to this many features
    instances: float = 1.0  # multiplier on every check's instance count
    tol: float | None = None  # override the check's own tolerance


def _rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, k]))


def _count(cfg: VerifyConfig, n: int) -> int:
    return max(1, int(round(n * cfg.instances)))


def _dims(cfg: VerifyConfig, default: tuple[int, ...]) -> tuple[int, ...]:
    return (cfg.d,) if cfg.d is not None else default


class _Tally:
    """Accumulates per-instance errors against a tolerance."""

    def __init__(self, name: str, tol: float):
        self.name, self.tol = name, tol
        self.worst = 0.0
        self.failing: list[int] = []
        self.n = 0
        self.detail: dict = {}

    def add(self, k: int, err: float, ok: bool | None = None) -> None:
        self.n += 1
        self.worst = max(self.worst, float(err))
        if ok is None:
            ok = err <= self.tol
        if not ok:
            self.failing.append(k)

    def result(self) -> CheckResult:
        return CheckResult(self.name, not self.failing, self.worst, self.tol, self.n,
                           self.failing, self.detail)


def _tol(cfg: VerifyConfig, default: float) -> float:
    return default if cfg.tol is None else cfg.tol


# -- checks ------------------------------------------------------------------


def check_efficiency(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("efficiency", _tol(cfg, 1e-9))
    for k in range(_count(cfg, 100)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (1, 2, 3, 4, 5))))
        grid, mu, _, f = random_instance(rng, d, 3 if d < 5 else 2)
        x = tuple(int(rng.integers(s)) for s in grid.shape)
        t.add(k, exact.shap_all(mu, f, x).efficiency_gap)
    return t.result()


def check_linearity(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("linearity", _tol(cfg, 1e-9))
    for k in range(_count(cfg, 50)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (2, 3, 4))))
        grid, mu, _, f = random_instance(rng, d)
        g = random_function(rng, grid)
        a, b = rng.normal(size=2)
        i = int(rng.integers(d))
        lhs = exact.shap_table(mu, f.scale(a) + g.scale(b), i)
        rhs = a * exact.shap_table(mu, f, i) + b * exact.shap_table(mu, g, i)
        t.add(k, float(np.max(np.abs(lhs - rhs))))
    return t.result()


def check_operator_agreement(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("operator_agreement", _tol(cfg, 1e-10))
    for k in range(_count(cfg, 50)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (1, 2, 3))))
        grid, mu, _, f = random_instance(rng, d)
        i = int(rng.integers(d))
        Phi = shap_operator_matrices(mu, i).Phi
        direct = np.array([exact.shap_value(mu, f, tuple(c), i) for c in Phi.basis])
        t.add(k, float(np.max(np.abs(Phi.apply(f) - direct))))
    return t.result()


def check_counterexample(cfg: VerifyConfig) -> CheckResult:
    """LP counterexamples: zero on the support, nonzero off it, large objective."""
    t = _Tally("counterexample", _tol(cfg, 1e-8))
    cases = [(3, 3, 0.5, 1.2), (7, 7, 0.5, 1.0), (4, 4, 0.6, 1.5)]
    for k, (d1, d2, ri, ro) in enumerate(cases):
        grid = Grid.from_shape(d1, d2)
        start = time.perf_counter()
        rep = find_counterexample(grid, ring_support(d1, d2, ri, ro), 0)
        secs = time.perf_counter() - start
        ok = (rep.found and rep.max_abs_shap_on_support <= t.tol
              and rep.max_abs_shap_on_extended >= 1e-6 and secs < 5.0)
        if (d1, d2) == (3, 3):
            ok = ok and rep.objective_value >= 0.5
        t.add(k, rep.max_abs_shap_on_support if rep.found else np.inf, ok)
        t.detail[f"{d1}x{d2}"] = {"objective": rep.objective_value, "extended": rep.max_abs_shap_on_extended,
                                  "cells": int(rep.support.sum())}
    return t.result()


def check_full_extended(cfg: VerifyConfig) -> CheckResult:
    """With the constraint on every extended-support cell, every pair's optimum is zero."""
    t = _Tally("full_extended", _tol(cfg, 1e-8))
    masks = [(2, 2, 0.5, 1.5), (3, 3, 0.5, 1.2), (3, 3, 0.6, 1.5), (4, 4, 0.6, 1.5), (4, 4, 0.9, 1.5)]
    for k, (d1, d2, ri, ro) in enumerate(masks):
        grid = Grid.from_shape(d1, d2)
        mask = ring_support(d1, d2, ri, ro)
        for i in (0, 1):
            t.add(k, max(max_objective_over_pairs(grid, mask, i, full_extended=True), 0.0))
    return t.result()


def check_ignored_iff_zero(cfg: VerifyConfig) -> CheckResult:
    """Zero SHAP on supp(mu*) iff f ignores feature i there; for mu and for mu*."""
    t = _Tally("ignored_iff_zero", _tol(cfg, 1e-8))
    for k in range(_count(cfg, 200)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (2, 3))))
        grid = random_grid(rng, d, 3)
        mu = random_distribution(rng, grid)
        i = int(rng.integers(d))
        f = determined_on_extended(rng, mu, i) if k % 2 == 0 else random_function(rng, grid)
        ext = extended_support(mu)
        det = is_determined(f, FeatureSubset.all_but(i, d), ext, 1e-6)
        worst = 0.0
        for dist in (mu, extended_distribution(mu)):
            phi = np.abs(exact.shap_table(dist, f, i))[ext].max()
            if det != (phi <= t.tol):
                t.add(k, phi, False)
                break
            worst = max(worst, phi if det else 0.0)
        else:
            t.add(k, worst, True)
    return t.result()


def check_reconstruction_bound(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("reconstruction_bound", _tol(cfg, 1e-9))
    for k in range(_count(cfg, 100)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (2, 3))))
        grid, mu, ms, f = random_instance(rng, d)
        i = int(rng.integers(d))
        g = reconstruct_determined(ms, f, i)
        det = is_determined(g, FeatureSubset.all_but(i, d), extended_support(ms), 1e-8)
        gap = l2_distance_sq(ms, f, g) - d * d * exact.aggregate_shap(ms, ms, f, i)
        t.add(k, max(gap, 0.0), det and gap <= t.tol)
    return t.result()


def check_l1_l2(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("l1_l2", _tol(cfg, 1e-12))
    for k in range(_count(cfg, 50)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (2, 3))))
        grid, mu, ms, f = random_instance(rng, d)
        sq, ab = l1_l2_bound_check(ms, f, int(rng.integers(d)))
        t.add(k, max(sq - ab, 0.0))
    return t.result()


def check_spectrum(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("spectrum", _tol(cfg, 1e-8))
    for k in range(_count(cfg, 100)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (1, 2, 3, 4))))
        grid = random_grid(rng, d, 3 if d < 4 else 2, min_size=2)
        mu = random_distribution(rng, grid)
        dist = mu if k % 2 == 0 else extended_distribution(mu)
        rep = spectrum_check(shap_operator_matrices(dist, int(rng.integers(d))).A, d, t.tol)
        t.add(k, max(rep.lower_bound - rep.min_real, rep.max_imag_abs, 0.0), not rep.violation)
    return t.result()


def check_hermitian(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("hermitian", _tol(cfg, 1e-10))
    for k in range(_count(cfg, 100)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (1, 2, 3))))
        ms = random_product(rng, random_grid(rng, d, 3))
        t.add(k, max(hermitian_check(ms, S) for S in all_subsets(d)))
    return t.result()


def check_derived_series(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("derived_series", 0.0)
    levels: dict[int, int] = {}
    for k in range(_count(cfg, 50)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (1, 2, 3))))
        mu = random_distribution(rng, random_grid(rng, d, 3))
        rep = derived_series(mu, rank_tol=_tol(cfg, 1e-9))
        ok = rep.vanish_level is not None and rep.vanish_level <= d + 1
        lvl = rep.vanish_level if rep.vanish_level is not None else -1
        levels[lvl] = levels.get(lvl, 0) + 1
        t.add(k, float(lvl), ok)
    t.detail["vanish_levels"] = {str(k): v for k, v in sorted(levels.items())}
    return t.result()


def check_operator_properties(cfg: VerifyConfig) -> CheckResult:
    """Idempotence, images of determined functions, and the conditioning of A_i."""
    t = _Tally("operator_properties", _tol(cfg, 1e-12))
    worst_sv = np.inf
    for k in range(_count(cfg, 200)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (1, 2, 3))))
        grid = random_grid(rng, d, 3)
        mu = random_distribution(rng, grid)
        ext = extended_support(mu)
        S = FeatureSubset(int(rng.integers(1 << d)), d)
        T = FeatureSubset(int(rng.integers(1 << d)), d)
        i = int(rng.integers(d))
        op = value_operator_matrix(mu, S)
        idem = float(np.max(np.abs(op.matrix @ op.matrix - op.matrix)))
        # T-determined f: constant along every feature outside T
        vals = rng.random(grid.shape)
        for j in T.complement().indices:
            vals = np.broadcast_to(vals.mean(axis=j, keepdims=True), grid.shape).copy()
        f = TabularFunction(grid, vals)
        ok = idem <= t.tol
        ok &= is_determined(op.to_function(op.apply(f)), S & T, ext, 1e-10)
        A, B, _ = shap_operator_matrices(mu, i)
        ok &= is_determined(B.to_function(B.apply(random_function(rng, grid))),
                            FeatureSubset.all_but(i, d), ext, 1e-10)
        sv = float(np.linalg.svd(A.matrix, compute_uv=False).min())
        worst_sv = min(worst_sv, sv)
        ok &= sv >= 1.0 / (2 * d)
        t.add(k, idem, ok)
    t.detail["min_singular_value_over_bound"] = worst_sv
    return t.result()


def check_kernelshap_limit(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("kernelshap_limit", _tol(cfg, 1e-9))
    for k in range(_count(cfg, 100)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (2, 3, 4))))
        grid, mu, _, f = random_instance(rng, d, 3 if d < 4 else 2)
        x = tuple(int(rng.integers(s)) for s in grid.shape)
        lim = np.array(kernelshap_limit(mu, f, x).per_feature)
        t.add(k, float(np.max(np.abs(lim - exact.shap_all(mu, f, x).per_feature))))
    return t.result()


def check_iota(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("iota", _tol(cfg, 1e-9))
    for k, d in enumerate(_dims(cfg, (2, 3, 4))):
        if d < 2:
            continue
        rng = _rng(cfg.seed, k)
        ms = random_product(rng, random_grid(rng, d, 3 if d < 4 else 2, min_size=2))
        for i in range(d):
            iota, _, _ = iota_coefficients(d, i)
            rep = iota_decomposition(ms, i, n_checks=20, seed=cfg.seed, tol=np.inf)
            ok = rep.iota_full == 1.0 / d and rep.min_iota_containing >= -1e-12
            ok &= rep.max_reconstruction_error <= t.tol
            t.add(k, rep.max_reconstruction_error, ok)
            t.detail[f"d={d},i={i}"] = {"iota_full": rep.iota_full, "min_iota_containing": rep.min_iota_containing}
    return t.result()


def check_kernelshap_bound(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("kernelshap_bound", _tol(cfg, 1e-9))
    kcfg = KernelShapConfig(mode="full_enumeration")
    for k in range(_count(cfg, 50)):
        rng = _rng(cfg.seed, k)
        d = int(rng.choice(_dims(cfg, (2, 3))))
        if d < 2:
            continue
        grid = random_grid(rng, d, 3, min_size=2)
        ms, scale = rational_product(rng, grid, 2)
        X = multiset_sample(ms, scale)
        f = random_function(rng, grid)
        i = int(rng.integers(d))
        eta = eta_estimate(X, ms, f, kcfg)
        g = reconstruct_determined(ms, f, i, coefficients=iota_coefficients(d, i)[0])
        gap = l2_distance_sq(ms, f, g) - d * d * (aggregate_kernelshap(X, f, i, kcfg) + eta)
        det = is_determined(g, FeatureSubset.all_but(i, d), extended_support(ms), 1e-8)
        t.add(k, max(gap, eta), det and eta <= t.tol and gap <= t.tol)
    return t.result()


def check_scramble(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("scramble", 0.0)
    rng = _rng(cfg.seed, 0)
    X = rng.integers(0, 5, size=(30, 3)).astype(float)
    for k in range(_count(cfg, 100)):
        a = scramble_columns(X, cfg.seed + k).rows
        b = scramble_columns(X, cfg.seed + k).rows
        same = a.tobytes() == b.tobytes()
        marg = all(np.array_equal(np.sort(a[:, j]), np.sort(X[:, j])) for j in range(X.shape[1]))
        t.add(k, 0.0, same and marg)
    return t.result()


def check_simplex(cfg: VerifyConfig) -> CheckResult:
    t = _Tally("simplex", _tol(cfg, 1e-8))
    for k in range(_count(cfg, 200)):
        rng = _rng(cfg.seed, k)
        n = int(rng.integers(1, 7))
        m = int(rng.integers(0, 5))
        A = rng.normal(size=(m, n))
        lo = rng.uniform(-1, 0, n)
        hi = lo + rng.uniform(0.2, 2, n)
        b = A @ rng.uniform(lo, hi) if k % 4 else A @ rng.uniform(lo - 1, hi + 1)
        p = LPProblem(rng.normal(size=n), A, b, lo, hi)
        got, ref = solve_lp(p), brute_force_lp(p)
        if got.status != ref.status:
            t.add(k, np.inf, False)
        elif ref.status == "optimal":
            t.add(k, max(abs(got.objective - ref.objective), got.residual))
        else:
            t.add(k, 0.0)
    return t.result()


def check_pq(cfg: VerifyConfig) -> CheckResult:
    """Enumerated off-diagonal of ``E_pi[1_S 1_S^T]`` at d=3; the closed form is only recorded."""
    t = _Tally("pq_guard", _tol(cfg, 1e-12))
    rep = M_matrix(3)
    t.add(0, abs(rep.q - 1.0 / 6.0))
    t.detail = {"p": rep.p, "q": rep.q, "p_closed_form": rep.p_closed_form, "q_closed_form": rep.q_closed_form}
    return t.result()


CHECKS: dict[str, Callable[[VerifyConfig], CheckResult]] = {
    "efficiency": check_efficiency,
    "linearity": check_linearity,
    "operator_agreement": check_operator_agreement,
    "counterexample": check_counterexample,
    "full_extended": check_full_extended,
    "ignored_iff_zero": check_ignored_iff_zero,
    "reconstruction_bound": check_reconstruction_bound,
    "l1_l2": check_l1_l2,
    "spectrum": check_spectrum,
    "hermitian": check_hermitian,
    "derived_series": check_derived_series,
    "operator_properties": check_operator_properties,
    "kernelshap_limit": check_kernelshap_limit,
    "iota": check_iota,
    "kernelshap_bound": check_kernelshap_bound,
    "scramble": check_scramble,
    "simplex": check_simplex,
    "pq_guard": check_pq,
}


def run_checks(names=None, cfg: VerifyConfig = VerifyConfig(), inject_fault: bool = False) -> list[CheckResult]:
    """Run the named checks (all by default) in registry order.

    ``inject_fault`` negates the Shapley weight of the empty coalition for the
    duration of the run, which the efficiency check must catch.
    """
    names = list(CHECKS) if not names else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}")
    results = []
    for name in CHECKS:
        if name not in names:
            continue
        start = time.perf_counter()
        if inject_fault:
            with exact.negated_empty_weight():
                res = CHECKS[name](cfg)
        else:
            res = CHECKS[name](cfg)
        res.seconds = time.perf_counter() - start
        results.append(res)
    return results
