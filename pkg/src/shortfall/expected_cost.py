"""Expected shortfall cost ``K(s) = E_f[V((f - s)^+)]`` under a prior.

For a non-increasing prior on ``[a, b]`` and a concave increasing ``V``,
``K`` is non-increasing, concave on ``[0, a]`` and convex on ``[a, b]``;
:func:`check_curvature` verifies this numerically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .domain import (
    CostFunction,
    DomainError,
    Linear,
    PiecewiseLinearConcave,
    PreconditionError,
    Prior,
    UniformPrior,
)
from .quadrature import DEFAULT_TOL, MAX_DEPTH

# s slightly above b can arise from (c - beta) / n rounding; treated as b.
_EDGE_SLACK = 1e-12


@dataclass(frozen=True)
class ExpectedCost:
    cost: CostFunction
    prior: Prior
    tol: float = DEFAULT_TOL
    _encoded: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_encoded",
            (*_backend.encode_cost(self.cost), *_backend.encode_prior(self.prior)),
        )

    @property
    def a(self) -> float:
        return self.prior.lo

    @property
    def b(self) -> float:
        return self.prior.hi

    @property
    def has_closed_form(self) -> bool:
        return isinstance(self.prior, UniformPrior) and isinstance(
            self.cost, (Linear, PiecewiseLinearConcave))

    def __call__(self, s):
        return eval_K(self, s)

    def quadrature(self, s, backend: str | None = None) -> np.ndarray:
        """``K`` by adaptive quadrature regardless of closed-form availability."""
        s = np.ascontiguousarray(np.atleast_1d(s), dtype=float)
        cc, cp, pc, pp = self._encoded
        kern = _backend.get_kernels(backend)
        return kern.expected_cost_batch(cc, cp, pc, pp, s, self.tol, MAX_DEPTH)

    def closed_form(self, s) -> np.ndarray:
        """Exact ``K`` for a uniform prior with linear or piecewise-linear cost."""
        if not self.has_closed_form:
            raise NotImplementedError("closed form needs a uniform prior and (piecewise) linear cost")
        s = np.atleast_1d(np.asarray(s, dtype=float))
        a, b = self.a, self.b
        lower = np.maximum(s, a)
        if isinstance(self.cost, Linear):
            val = self.cost.slope * ((b - s) ** 2 - (lower - s) ** 2) / (2.0 * (b - a))
        else:
            W = self.cost.integral
            val = (W(np.maximum(b - s, 0.0)) - W(lower - s)) / (b - a)
        return np.where(s >= b, 0.0, val)


def eval_K(ec: ExpectedCost, s):
    """Expected cost at rate(s) ``s`` in ``[0, b]``; scalar in, scalar out."""
    arr = np.asarray(s, dtype=float)
    b = ec.b
    if np.any(arr < 0) or np.any(arr > b + _EDGE_SLACK * max(1.0, b)) or np.any(np.isnan(arr)):
        raise DomainError(f"rate must lie in [0, {b}], got {s!r}")
    flat = np.minimum(arr.reshape(-1), b)
    vals = ec.closed_form(flat) if ec.has_closed_form else ec.quadrature(flat)
    return float(vals[0]) if arr.ndim == 0 else vals.reshape(arr.shape)


@dataclass(frozen=True)
class CurvatureReport:
    scale: float
    concave_empty: bool
    concave_max_second_diff: float
    convex_min_second_diff: float
    monotone: bool
    concave_ok: bool
    convex_ok: bool
    notes: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.concave_ok and self.convex_ok and self.monotone


def _half_step_grid(lo: float, hi: float, n: int) -> np.ndarray:
    h = (hi - lo) / n
    return lo + (np.arange(n) + 0.5) * h


def check_curvature(ec: ExpectedCost, grid_points: int = 64, rtol: float = 1e-6) -> CurvatureReport:
    """Second-difference test of concavity on ``(0, a)`` and convexity on ``(a, b)``.

    Grids are offset by half a step so no sample lands on ``a`` or ``b``.
    The sign tolerance is ``rtol * K(0)``.
    """
    if grid_points < 5:
        raise PreconditionError("grid_points must be at least 5")
    a, b = ec.a, ec.b
    scale = float(eval_K(ec, 0.0))
    tol = rtol * scale
    notes = []

    concave_empty = a <= 0
    if concave_empty:
        notes.append("a = 0: concave segment is empty, only convexity checked")
        conc_max = -np.inf
        left = np.empty(0)
        kl = np.empty(0)
    else:
        left = _half_step_grid(0.0, a, grid_points)
        kl = eval_K(ec, left)
        conc_max = float(np.max(kl[:-2] - 2 * kl[1:-1] + kl[2:]))

    right = _half_step_grid(a, b, grid_points)
    kr = eval_K(ec, right)
    conv_min = float(np.min(kr[:-2] - 2 * kr[1:-1] + kr[2:]))

    ks = np.concatenate([[scale], kl, kr, [float(eval_K(ec, b))]])
    monotone = bool(np.all(np.diff(ks) <= DEFAULT_TOL))
    return CurvatureReport(
        scale=scale,
        concave_empty=concave_empty,
        concave_max_second_diff=conc_max,
        convex_min_second_diff=conv_min,
        monotone=monotone,
        concave_ok=concave_empty or conc_max <= tol,
        convex_ok=conv_min >= -tol,
        notes=tuple(notes),
    )


def monte_carlo_K0(ec: ExpectedCost, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Sample estimate of ``K(0) = E[V(f)]`` and its standard error."""
    v = ec.cost(ec.prior.sample(rng, samples))
    return float(np.mean(v)), float(np.std(v, ddof=1) / np.sqrt(samples))


def expected_objective(instance, alloc) -> float:
    """Normalized expected dissatisfaction ``(1/m) sum K_i(s_i)`` of an allocation."""
    alloc.check()
    if alloc.m != instance.m:
        raise ValueError(f"allocation has {alloc.m} users, instance has {instance.m}")
    cache: dict[tuple, ExpectedCost] = {}
    total = 0.0
    for c, p, s in zip(instance.costs, instance.priors, alloc.rates):
        ec = cache.setdefault((c, p), ExpectedCost(c, p))
        total += float(eval_K(ec, s))
    return total / instance.m
