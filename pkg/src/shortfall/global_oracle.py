"""Brute-force ground truth for the two allocation programs.

A concave objective over the box-and-budget polytope attains its minimum at
a vertex, and every vertex has at most one user strictly between 0 and its
mean rate.  :func:`solve_concave_exact` enumerates all such vertices.
:func:`solve_expected_grid` searches a uniform rate grid exhaustively.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (
    FEAS_TOL,
    Allocation,
    KnownInstance,
    SizeError,
    UnknownInstance,
    ensure_valid,
)
from .expected_cost import ExpectedCost, eval_K, expected_objective
from .known_solver import true_objective

DEFAULT_CORNER_LIMIT = 15
DEFAULT_GRID_LIMIT = 3
_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class OracleResult:
    allocation: Allocation
    objective: float
    corners_evaluated: int
    lipschitz_bound: float | None = None


def _lexmin(candidates: np.ndarray) -> int:
    """Row index of the lexicographically smallest row."""
    return int(np.lexsort(candidates.T[::-1])[0])


def solve_concave_exact(instance: KnownInstance, limit: int = DEFAULT_CORNER_LIMIT) -> OracleResult:
    """Exact minimum of the concave program by vertex enumeration, O(2^m m)."""
    m = instance.m
    if m > limit:
        raise SizeError(f"corner enumeration limited to {limit} users, got {m}")
    ensure_valid(instance)
    f = instance.mean_rates
    budget = instance.budget

    masks = np.arange(1 << m)
    bits = ((masks[:, None] >> np.arange(m)) & 1).astype(bool)
    served = bits @ f
    feasible = served <= budget + FEAS_TOL
    bits, served = bits[feasible], served[feasible]
    rem = np.maximum(budget - served, 0.0)

    vf = instance.bank(f)
    base = (~bits) @ vf  # everyone outside the subset is unserved
    extra_share = np.minimum(f[None, :], rem[:, None])
    extra_cost = np.empty_like(extra_share)
    for j, cost in enumerate(instance.costs):
        extra_cost[:, j] = cost._eval(f[j] - extra_share[:, j])
    extra_obj = base[:, None] - vf[None, :] + extra_cost
    extra_obj[bits] = np.inf
    n_corners = int(base.size + np.count_nonzero(~bits))

    best = min(float(base.min()), float(extra_obj.min()))
    tie = best + _TIE_RTOL * max(1.0, abs(best))
    rows = []
    for r in np.flatnonzero(base <= tie):
        rows.append(np.where(bits[r], f, 0.0))
    for r, j in zip(*np.nonzero(extra_obj <= tie)):
        s = np.where(bits[r], f, 0.0)
        s[j] = extra_share[r, j]
        rows.append(s)
    cand = np.array(rows)
    s = cand[_lexmin(cand)]
    alloc = Allocation(s, budget)
    return OracleResult(alloc, true_objective(instance, alloc), n_corners)


def rate_grid(b: float, step: float) -> np.ndarray:
    """``{0, step, 2 step, ...}`` up to ``b``, with ``b`` appended if off-grid."""
    n = int(np.floor(b / step + 1e-9))
    g = step * np.arange(n + 1)
    g = g[g <= b]
    if b - g[-1] > 1e-12 * max(1.0, b):
        g = np.append(g, b)
    return g


def grid_lipschitz(values: np.ndarray, grid: np.ndarray) -> float:
    """Largest absolute slope between adjacent grid samples."""
    if grid.size < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(values)) / np.diff(grid)))


def solve_expected_grid(instance: UnknownInstance, grid_step: float,
                        max_users: int = DEFAULT_GRID_LIMIT) -> OracleResult:
    """Exhaustive grid minimizer of ``(1/m) sum K_i(s_i)`` subject to the budget.

    The last user's rate is resolved with a running minimum over its grid,
    which is the same search as enumerating it, without the extra dimension.
    The reported ``lipschitz_bound`` is ``(1/m) sum_i`` of each user's largest
    adjacent-grid slope of ``K_i``; the grid optimum exceeds the true optimum
    by at most ``grid_step`` times this bound.
    """
    m = instance.m
    if m > max_users:
        raise SizeError(f"grid oracle limited to {max_users} users, got {m}")
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    ensure_valid(instance)
    budget = instance.budget

    cache: dict = {}
    grids, values = [], []
    for c, p in zip(instance.costs, instance.priors):
        key = (c, p)
        if key not in cache:
            g = rate_grid(p.hi, grid_step)
            cache[key] = (g, eval_K(ExpectedCost(c, p), g))
        grids.append(cache[key][0])
        values.append(cache[key][1])
    lip = sum(grid_lipschitz(v, g) for g, v in zip(grids, values)) / m

    # partial sums over the first m-1 users
    part_rate = np.zeros(())
    part_val = np.zeros(())
    for g, v in zip(grids[:-1], values[:-1]):
        part_rate = part_rate[..., None] + g
        part_val = part_val[..., None] + v
    g_last, v_last = grids[-1], values[-1]
    run_min = np.minimum.accumulate(v_last)
    # first index attaining each running minimum, i.e. the smallest rate
    is_new = np.concatenate([[True], v_last[1:] < run_min[:-1]])
    arg_run = np.maximum.accumulate(np.where(is_new, np.arange(v_last.size), 0))

    room = budget - part_rate
    last_idx = np.searchsorted(g_last, room + FEAS_TOL, side="right") - 1
    ok = last_idx >= 0
    total = np.where(ok, part_val + run_min[np.clip(last_idx, 0, None)], np.inf)
    flat = int(np.argmin(total))  # row-major: lexicographically smallest prefix
    idx = np.unravel_index(flat, total.shape)
    rates = [grids[u][i] for u, i in enumerate(idx)]
    rates.append(g_last[arg_run[last_idx[idx]]])
    alloc = Allocation(np.array(rates), budget)
    n_points = int(np.sum(np.where(ok, last_idx + 1, 0)))
    return OracleResult(alloc, expected_objective(instance, alloc), n_points, lip)
