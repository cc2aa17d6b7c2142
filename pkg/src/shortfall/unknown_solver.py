"""Exact allocation for symmetric users with unknown mean consumption.

Every user shares the expected cost ``K``, which is concave on ``[0, a]`` and
convex on ``[a, b]``.  Some optimum has one user at ``beta`` in ``[0, a]``,
``n`` users at the common rate ``(c - beta) / n`` in ``[a, b]`` and the rest at
zero, so it suffices to scan ``n`` and solve a one-dimensional problem in
``beta`` for each.  The scan also covers the configuration where all ``m``
users share one rate in ``[a, b]``, which has no ``beta`` user.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    Allocation,
    DomainError,
    PreconditionError,
    UnknownInstance,
    ensure_valid,
)
from .expected_cost import ExpectedCost, eval_K
from .global_oracle import grid_lipschitz

BETA_GRID = 1001
BETA_TOL = 1e-9
_TIE_RTOL = 1e-12
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class NRow:
    n: int
    feasible: bool
    value: float
    beta: float | None
    lipschitz: float | None = None


@dataclass(frozen=True, eq=False)
class SymAllocReport:
    allocation: Allocation
    n_star: int
    beta_star: float | None
    v_star: float
    normalized_objective: float
    per_n_table: tuple[NRow, ...]
    all_equal: bool = False
    lipschitz_bound: float = 0.0


def beta_interval(n: int, m: int, budget: float, a: float, b: float) -> tuple[float, float]:
    return max(0.0, budget - n * b), min(a, budget - n * a)


def _golden(g, lo: float, hi: float, tol: float) -> float:
    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1, f2 = g(x1), g(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_PHI * (hi - lo)
            f1 = g(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_PHI * (hi - lo)
            f2 = g(x2)
    return 0.5 * (lo + hi)


def _vstar(n: int, m: int, budget: float, K: ExpectedCost):
    lo, hi = beta_interval(n, m, budget, K.a, K.b)
    if lo > hi:
        return None
    k0 = float(eval_K(K, 0.0))

    def g(beta):
        beta = np.minimum(np.maximum(beta, lo), hi)
        val = eval_K(K, beta) + (m - n - 1) * k0
        if n > 0:
            val = val + n * eval_K(K, np.clip((budget - beta) / n, K.a, K.b))
        return val

    if hi == lo:
        return float(g(lo)), lo, 0.0
    betas = np.linspace(lo, hi, BETA_GRID)
    vals = g(betas)
    j = int(np.argmin(vals))
    best_beta, best_val = float(betas[j]), float(vals[j])
    left, right = betas[max(j - 1, 0)], betas[min(j + 1, BETA_GRID - 1)]
    refined = _golden(lambda x: float(g(x)), float(left), float(right), BETA_TOL)
    rv = float(g(refined))
    if rv < best_val:
        best_beta, best_val = refined, rv
    return best_val, best_beta, grid_lipschitz(vals, betas)


def find_vstar(n: int, m: int, budget: float, K: ExpectedCost):
    """Minimize ``K(beta) + n K((c - beta)/n) + (m - n - 1) K(0)`` over the beta box.

    Returns ``(value, beta)``, or ``None`` when the box is empty.  The search
    is a 1001-point grid followed by golden-section refinement around the
    best grid point to ``1e-9`` in beta.
    """
    if not 0 <= n <= m - 1:
        raise DomainError(f"n must lie in [0, {m - 1}], got {n}")
    res = _vstar(n, m, budget, K)
    return None if res is None else res[:2]


def _layout(m: int, n: int, beta: float, rate: float) -> np.ndarray:
    s = np.zeros(m)
    s[0] = beta
    s[1:n + 1] = rate
    return s


def sym_alloc(instance: UnknownInstance) -> SymAllocReport:
    """Optimal allocation for identical costs and identical priors."""
    if not instance.symmetric:
        raise PreconditionError("sym_alloc needs a symmetric instance (identical costs and priors)")
    ensure_valid(instance)
    m, budget = instance.m, instance.budget
    K = ExpectedCost(instance.costs[0], instance.priors[0])
    a, b = K.a, K.b

    rows = []
    best = None  # (value, n, beta)
    lip = 0.0
    for n in range(m):
        res = _vstar(n, m, budget, K)
        if res is None:
            rows.append(NRow(n, False, math.inf, None))
            continue
        value, beta, row_lip = res
        lip = max(lip, row_lip)
        rows.append(NRow(n, True, value, beta, row_lip))
        if best is None or value < best[0] - _TIE_RTOL * max(1.0, abs(best[0])):
            best = (value, n, beta)

    # all m users at one rate in [a, b]; needs no beta user
    all_equal = False
    if budget >= m * a:
        r = min(b, budget / m)
        value = m * float(eval_K(K, r))
        rows.append(NRow(m, True, value, None))
        if best is None or value < best[0] - _TIE_RTOL * max(1.0, abs(best[0])):
            best = (value, m, None)
            all_equal = True
    else:
        rows.append(NRow(m, False, math.inf, None))

    value, n_star, beta_star = best
    if all_equal:
        rates = np.full(m, min(b, budget / m))
    else:
        r = (budget - beta_star) / n_star if n_star else 0.0
        r = min(max(r, a), b) if n_star else 0.0
        if n_star and beta_star >= a and r > beta_star:
            # beta at the right end of its box: the beta user is really part of
            # the convex group, and spreading evenly cannot cost more
            merged = budget / (n_star + 1)
            value = (n_star + 1) * float(eval_K(K, merged)) + (m - n_star - 1) * float(eval_K(K, 0.0))
            if n_star + 1 == m:
                rates, n_star, beta_star, all_equal = np.full(m, merged), m, None, True
            else:
                rates = _layout(m, n_star + 1, 0.0, merged)
                n_star, beta_star = n_star + 1, 0.0
        else:
            rates = _layout(m, n_star, beta_star, r)
    alloc = Allocation(rates, budget)
    return SymAllocReport(
        allocation=alloc,
        n_star=n_star,
        beta_star=beta_star,
        v_star=value,
        normalized_objective=value / m,
        per_n_table=tuple(rows),
        all_equal=all_equal,
        lipschitz_bound=lip,
    )
