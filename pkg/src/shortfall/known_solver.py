"""Greedy solver for the linearized allocation program.

Replacing each concave cost by its chord ``x * V_i(f_i) / f_i`` turns the
problem into a fractional knapsack: serve users fully in decreasing order of
``V_i(f_i) / f_i`` and give the first user that does not fit whatever budget
remains.  The result is within ``(V_j(f_j) + V_k(f_k)) / m`` of the concave
optimum for some users ``j, k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    FEAS_TOL,
    Allocation,
    DomainError,
    KnownInstance,
    ensure_valid,
)


@dataclass(frozen=True, eq=False)
class GreedySolveReport:
    allocation: Allocation
    lp_objective: float
    true_objective: float
    fractional_user: int | None
    sort_order: np.ndarray


def _check_alloc(instance: KnownInstance, alloc: Allocation) -> np.ndarray:
    if alloc.m != instance.m:
        raise ValueError(f"allocation has {alloc.m} users, instance has {instance.m}")
    if abs(alloc.budget - instance.budget) > FEAS_TOL:
        raise ValueError("allocation budget differs from instance budget")
    alloc.check()
    return alloc.rates


def true_objective(instance: KnownInstance, alloc: Allocation) -> float:
    """Normalized dissatisfaction ``(1/m) sum V_i(max(f_i - s_i, 0))``."""
    s = _check_alloc(instance, alloc)
    shortfall = np.maximum(instance.mean_rates - s, 0.0)
    return float(np.sum(instance.bank(shortfall))) / instance.m


def linprog_objective(instance: KnownInstance, alloc: Allocation) -> float:
    """Linearized objective ``(1/m) sum (1 - s_i/f_i) V_i(f_i)``; needs ``s <= f``."""
    s = _check_alloc(instance, alloc)
    f = instance.mean_rates
    if np.any(s > f + FEAS_TOL):
        i = int(np.argmax(s - f))
        raise DomainError(f"rate {s[i]} exceeds mean rate {f[i]} for user {i}")
    frac = np.minimum(s / f, 1.0)
    return float(np.sum((1.0 - frac) * instance.bank(f))) / instance.m


def solve_linprog(instance: KnownInstance, validate: bool = True) -> GreedySolveReport:
    """Greedy solution of the linearized program in O(m log m).

    Ratios ``V_i(f_i) / f_i`` are compared exactly; equal ratios keep the
    lower user index first.
    """
    if validate:
        ensure_valid(instance, thorough=False)
    f = instance.mean_rates
    budget = instance.budget
    vf = instance.bank(f)
    order = np.argsort(-(vf / f), kind="stable")
    fs = f[order]
    cum = np.cumsum(fs)
    s = np.zeros_like(f)
    fractional = None
    if cum[-1] <= budget:
        s[:] = f
    else:
        k = int(np.searchsorted(cum, budget, side="right"))
        head = math.fsum(fs[:k].tolist())
        # cumsum rounding can overshoot the budget at the boundary
        while k > 0 and head > budget:
            k -= 1
            head = math.fsum(fs[:k].tolist())
        full = order[:k]
        s[full] = f[full]
        rem = budget - head
        j = order[k]
        s[j] = min(max(rem, 0.0), f[j])
        if 0.0 < s[j] < f[j]:
            fractional = int(j)
    alloc = Allocation(s, budget)
    m = instance.m
    lp = float(np.sum((1.0 - s / f) * vf)) / m
    true = float(np.sum(instance.bank(np.maximum(f - s, 0.0)))) / m
    return GreedySolveReport(alloc, lp, true, fractional, order)


def corner_structure_violations(rates: np.ndarray, mean_rates: np.ndarray) -> int:
    """How many users sit strictly inside ``(0, f_i)``, beyond the one allowed."""
    inside = np.count_nonzero((rates > 0) & (rates < mean_rates))
    return max(inside - 1, 0)
