"""Slow reference implementations used as independent oracles."""

import itertools
import math


def brute_value(dist, f, x, S):
    """``E[f(x_S, X_{S^c})]`` by an explicit loop over every cell of the grid."""
    total = 0.0
    for y in itertools.product(*(range(k) for k in dist.grid.shape)):
        if dist.mass[y] == 0:
            continue
        z = tuple(x[j] if j in S else y[j] for j in range(len(x)))
        total += dist.mass[y] * f.values[z]
    return total


def brute_shap(dist, f, x, i):
    """Shapley value by averaging marginal contributions over all feature orderings."""
    d = dist.grid.d
    total = 0.0
    for order in itertools.permutations(range(d)):
        before = set(order[: order.index(i)])
        total += brute_value(dist, f, x, before | {i}) - brute_value(dist, f, x, before)
    return total / math.factorial(d)


def kkt_kernelshap(d, weights, values, target):
    """Constrained weighted least squares solved through its KKT system.

    ``weights`` and ``values`` map subset bitmasks to the kernel weight and to
    ``v_S - v_empty``; the coefficients are forced to sum to ``target``.
    """
    import numpy as np

    Z = np.array([[b >> j & 1 for j in range(d)] for b in weights], dtype=float)
    w = np.array(list(weights.values()))
    y = np.array([values[b] for b in weights])
    K = np.zeros((d + 1, d + 1))
    K[:d, :d] = 2 * (Z * w[:, None]).T @ Z
    K[:d, d] = K[d, :d] = 1.0
    rhs = np.concatenate([2 * (Z * w[:, None]).T @ y, [target]])
    return np.linalg.solve(K, rhs)[:d]
