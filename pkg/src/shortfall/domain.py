"""Core value types: cost functions, priors, problem instances, allocations.

Objects here are lenient at construction (so that a malformed scenario can
still be described and reported on) and immutable afterwards.  Semantic
checks live in :func:`validate_instance`, which returns a list of human
readable violations instead of raising.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, Sequence, Union

import numpy as np

FEAS_TOL = 1e-9
IDENTITY_RTOL = 1e-12
VALIDATION_GRID = 101


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class FeasibilityError(ValueError):
    """An allocation violates non-negativity or the budget."""


class SizeError(ValueError):
    """A brute-force routine was asked for an instance that is too large."""


class PreconditionError(ValueError):
    """A documented precondition of an operation does not hold."""


class InvalidInstanceError(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid instance: " + "; ".join(self.problems))


def _as_float_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# Cost functions
# ---------------------------------------------------------------------------


class CostFunction:
    """Concave, increasing dissatisfaction map with ``V(0) = 0``.

    Calling an instance evaluates it elementwise on scalars or arrays.
    Negative arguments raise :class:`DomainError`.
    """

    kind: ClassVar[str] = ""

    def __call__(self, x):
        arr = _as_float_array(x)
        if np.any(arr < 0) or np.any(np.isnan(arr)):
            raise DomainError(f"shortfall must be non-negative, got {x!r}")
        out = self._eval(arr)
        return float(out) if out.ndim == 0 else out

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def kinks(self) -> tuple[float, ...]:
        """Interior points where the derivative jumps."""
        return ()

    def to_dict(self) -> dict:
        raise NotImplementedError

    def structural_problems(self) -> list[str]:
        return []


@dataclass(frozen=True)
class Linear(CostFunction):
    slope: float
    kind: ClassVar[str] = "linear"

    def __post_init__(self):
        object.__setattr__(self, "slope", float(self.slope))

    def _eval(self, x):
        return self.slope * x

    def to_dict(self):
        return {"kind": self.kind, "slope": self.slope}

    def structural_problems(self):
        if not (math.isfinite(self.slope) and self.slope >= 0):
            return [f"linear slope must be finite and >= 0, got {self.slope}"]
        return []


@dataclass(frozen=True)
class Sqrt(CostFunction):
    """``V(x) = scale * sqrt(x)``."""

    scale: float
    kind: ClassVar[str] = "sqrt"

    def __post_init__(self):
        object.__setattr__(self, "scale", float(self.scale))

    def _eval(self, x):
        return self.scale * np.sqrt(x)

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale}

    def structural_problems(self):
        if not (math.isfinite(self.scale) and self.scale >= 0):
            return [f"sqrt scale must be finite and >= 0, got {self.scale}"]
        return []


@dataclass(frozen=True)
class Log1p(CostFunction):
    """``V(x) = scale * log(1 + x)``."""

    scale: float
    kind: ClassVar[str] = "log1p"

    def __post_init__(self):
        object.__setattr__(self, "scale", float(self.scale))

    def _eval(self, x):
        return self.scale * np.log1p(x)

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale}

    def structural_problems(self):
        if not (math.isfinite(self.scale) and self.scale >= 0):
            return [f"log1p scale must be finite and >= 0, got {self.scale}"]
        return []


@dataclass(frozen=True)
class PiecewiseLinearConcave(CostFunction):
    """Linear interpolation through ``breakpoints``.

    Beyond the last breakpoint the final segment's slope is extended.
    """

    breakpoints: tuple[tuple[float, float], ...]
    kind: ClassVar[str] = "piecewise_linear"

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.breakpoints)
        if len(pts) < 2:
            raise ValueError("piecewise-linear cost needs at least two breakpoints")
        object.__setattr__(self, "breakpoints", pts)

    @property
    def xs(self) -> np.ndarray:
        return np.array([p[0] for p in self.breakpoints])

    @property
    def ys(self) -> np.ndarray:
        return np.array([p[1] for p in self.breakpoints])

    def slopes(self) -> np.ndarray:
        return np.diff(self.ys) / np.diff(self.xs)

    def _eval(self, x):
        xs, ys = self.xs, self.ys
        out = np.interp(x, xs, ys)
        tail = x > xs[-1]
        if np.any(tail):
            last = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
            out = np.where(tail, ys[-1] + last * (x - xs[-1]), out)
        return out

    def kinks(self):
        return tuple(x for x, _ in self.breakpoints[1:-1] if x > 0)

    def integral(self, x):
        """``W(x) = int_0^x V(u) du``, exact (piecewise quadratic)."""
        x = _as_float_array(x)
        xs, ys = self.xs, self.ys
        slopes = self.slopes()
        # cumulative area at each breakpoint
        seg_area = 0.5 * (ys[:-1] + ys[1:]) * np.diff(xs)
        cum = np.concatenate([[0.0], np.cumsum(seg_area)])
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
        dx = x - xs[idx]
        out = cum[idx] + ys[idx] * dx + 0.5 * slopes[idx] * dx * dx
        return float(out) if out.ndim == 0 else out

    def to_dict(self):
        return {"kind": self.kind, "breakpoints": [list(p) for p in self.breakpoints]}

    def structural_problems(self):
        problems = []
        xs, ys = self.xs, self.ys
        if xs[0] != 0.0 or ys[0] != 0.0:
            if ys[0] != 0.0 and xs[0] == 0.0:
                problems.append(f"V(0) != 0 (first breakpoint is {self.breakpoints[0]})")
            else:
                problems.append(f"first breakpoint must be (0, 0), got {self.breakpoints[0]}")
        if np.any(np.diff(xs) <= 0):
            problems.append("breakpoint x values must be strictly increasing")
            return problems
        slopes = self.slopes()
        if np.any(slopes < 0):
            problems.append("piecewise-linear cost is decreasing on some segment")
        if np.any(np.diff(slopes) > IDENTITY_RTOL * max(1.0, float(np.max(np.abs(slopes))))):
            problems.append("piecewise-linear slopes must be non-increasing (concavity)")
        return problems


def eval_cost(cost: CostFunction, x):
    """Dissatisfaction ``V(x)`` for a shortfall ``x >= 0``."""
    return cost(x)


COST_KINDS: dict[str, type[CostFunction]] = {
    cls.kind: cls for cls in (Linear, Sqrt, Log1p, PiecewiseLinearConcave)
}


def _check_keys(what: str, got, expected) -> None:
    extra = sorted(set(got) - set(expected))
    missing = sorted(set(expected) - set(got))
    if extra:
        raise ValueError(f"unknown key {extra[0]!r} for {what}; expected {sorted(expected)}")
    if missing:
        raise ValueError(f"missing key {missing[0]!r} for {what}")


def cost_from_dict(d: dict) -> CostFunction:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in COST_KINDS:
        raise ValueError(f"unknown cost kind {kind!r}; expected one of {sorted(COST_KINDS)}")
    cls = COST_KINDS[kind]
    if cls is PiecewiseLinearConcave:
        expected = {"breakpoints"}
    elif cls is Linear:
        expected = {"slope"}
    else:
        expected = {"scale"}
    _check_keys(f"{kind} cost", d, expected)
    if cls is PiecewiseLinearConcave:
        return cls(tuple(tuple(p) for p in d["breakpoints"]))
    (key,) = expected
    return cls(float(d[key]))


class CostBank:
    """Columnar view over many cost functions for vectorized evaluation.

    Closed-form families are stored as parameter arrays; piecewise-linear
    costs are grouped by value so that repeated shapes share one ``interp``.
    """

    def __init__(self, costs: Sequence[CostFunction]):
        groups: dict[type, list[int]] = {Linear: [], Sqrt: [], Log1p: []}
        pl: dict[PiecewiseLinearConcave, list[int]] = {}
        for i, c in enumerate(costs):
            t = type(c)
            if t is PiecewiseLinearConcave:
                pl.setdefault(c, []).append(i)
            elif t in groups:
                groups[t].append(i)
            else:
                raise TypeError(f"unsupported cost function {c!r}")
        self.size = len(costs)
        self._families = []
        for t, idx in groups.items():
            if idx:
                idx_arr = np.asarray(idx, dtype=np.intp)
                attr = "slope" if t is Linear else "scale"
                params = np.fromiter((getattr(costs[i], attr) for i in idx), float, len(idx))
                self._families.append((t, idx_arr, params))
        self._pl = [(c, np.asarray(idx, dtype=np.intp)) for c, idx in pl.items()]

    def __call__(self, x) -> np.ndarray:
        x = _as_float_array(x)
        if x.shape != (self.size,):
            raise ValueError(f"expected {self.size} shortfalls, got shape {x.shape}")
        if np.any(x < 0):
            raise DomainError("shortfall must be non-negative")
        out = np.empty(self.size)
        for t, idx, params in self._families:
            xi = x[idx]
            if t is Linear:
                out[idx] = params * xi
            elif t is Sqrt:
                out[idx] = params * np.sqrt(xi)
            else:
                out[idx] = params * np.log1p(xi)
        for c, idx in self._pl:
            out[idx] = c._eval(x[idx])
        return out

    def parameter_problems(self) -> list[tuple[int, str]]:
        """Cheap checks: family parameters and piecewise-linear structure."""
        problems = []
        for t, idx, params in self._families:
            bad = ~(np.isfinite(params) & (params >= 0))
            for i in idx[bad]:
                problems.append((int(i), f"{t.kind} parameter must be finite and >= 0"))
        for c, idx in self._pl:
            for msg in c.structural_problems():
                problems.append((int(idx[0]), msg))
        return problems


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


class Prior:
    """Probability density on a finite support ``[lo, hi]``."""

    kind: ClassVar[str] = ""
    lo: float
    hi: float

    def pdf(self, f):
        f = _as_float_array(f)
        inside = (f >= self.lo) & (f <= self.hi)
        out = np.where(inside, self._pdf(np.clip(f, self.lo, self.hi)), 0.0)
        return float(out) if out.ndim == 0 else out

    def _pdf(self, f: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.ppf(rng.random(size))

    def mean(self) -> float:
        raise NotImplementedError

    def kinks(self) -> tuple[float, ...]:
        return ()

    def to_dict(self) -> dict:
        raise NotImplementedError

    def structural_problems(self) -> list[str]:
        problems = []
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            problems.append("prior support must be finite")
        elif not self.lo < self.hi:
            problems.append(f"support must satisfy a < b, got a={self.lo}, b={self.hi}")
        if self.lo < 0:
            problems.append(f"support must be non-negative, got a={self.lo}")
        return problems


@dataclass(frozen=True)
class UniformPrior(Prior):
    lo: float
    hi: float
    kind: ClassVar[str] = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))

    def _pdf(self, f):
        return np.full_like(f, 1.0 / (self.hi - self.lo))

    def ppf(self, u):
        return self.lo + (self.hi - self.lo) * _as_float_array(u)

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class TruncatedExponentialPrior(Prior):
    """Exponential density with the given rate, truncated to ``[lo, hi]``."""

    lo: float
    hi: float
    rate: float
    kind: ClassVar[str] = "truncated_exponential"

    def __post_init__(self):
        for name in ("lo", "hi", "rate"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def _mass(self) -> float:
        return -math.expm1(-self.rate * (self.hi - self.lo))

    def _pdf(self, f):
        return self.rate * np.exp(-self.rate * (f - self.lo)) / self._mass

    def ppf(self, u):
        u = _as_float_array(u)
        return self.lo - np.log1p(-u * self._mass) / self.rate

    def mean(self):
        lam, w = self.rate, self.hi - self.lo
        # E[f - lo] for an exponential truncated at w
        return self.lo + 1.0 / lam - w * math.exp(-lam * w) / self._mass

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi, "rate": self.rate}

    def structural_problems(self):
        problems = super().structural_problems()
        if not (math.isfinite(self.rate) and self.rate > 0):
            problems.append(f"exponential rate must be > 0, got {self.rate}")
        return problems


@dataclass(frozen=True)
class PiecewiseConstantPrior(Prior):
    """Step density: ``heights[k]`` on ``[edges[k], edges[k+1])``."""

    edges: tuple[float, ...]
    heights: tuple[float, ...]
    kind: ClassVar[str] = "piecewise_constant"

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        object.__setattr__(self, "heights", tuple(float(h) for h in self.heights))
        if len(self.edges) != len(self.heights) + 1 or not self.heights:
            raise ValueError("piecewise-constant prior needs len(edges) == len(heights) + 1 >= 2")

    @property
    def lo(self):
        return self.edges[0]

    @property
    def hi(self):
        return self.edges[-1]

    def _pdf(self, f):
        e = np.asarray(self.edges)
        idx = np.clip(np.searchsorted(e, f, side="right") - 1, 0, len(self.heights) - 1)
        return np.asarray(self.heights)[idx]

    def _cum(self):
        return np.concatenate([[0.0], np.cumsum(np.asarray(self.heights) * np.diff(self.edges))])

    def ppf(self, u):
        u = _as_float_array(u) * self._cum()[-1]
        cum = self._cum()
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(self.heights) - 1)
        h = np.asarray(self.heights)[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(h > 0, (u - cum[idx]) / h, 0.0)
        return np.asarray(self.edges)[idx] + step

    def mean(self):
        e = np.asarray(self.edges)
        h = np.asarray(self.heights)
        return float(np.sum(h * (e[1:] ** 2 - e[:-1] ** 2) / 2) / np.sum(h * np.diff(e)))

    def kinks(self):
        return self.edges[1:-1]

    def to_dict(self):
        return {"kind": self.kind, "edges": list(self.edges), "heights": list(self.heights)}

    def structural_problems(self):
        problems = super().structural_problems()
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            problems.append("prior edges must be strictly increasing")
        if any(h < 0 for h in self.heights):
            problems.append("prior heights must be non-negative")
        return problems


PRIOR_KINDS: dict[str, type[Prior]] = {
    cls.kind: cls for cls in (UniformPrior, TruncatedExponentialPrior, PiecewiseConstantPrior)
}
_PRIOR_KEYS = {
    "uniform": {"lo", "hi"},
    "truncated_exponential": {"lo", "hi", "rate"},
    "piecewise_constant": {"edges", "heights"},
}


def prior_from_dict(d: dict) -> Prior:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in PRIOR_KINDS:
        raise ValueError(f"unknown prior kind {kind!r}; expected one of {sorted(PRIOR_KINDS)}")
    _check_keys(f"{kind} prior", d, _PRIOR_KEYS[kind])
    if kind == "piecewise_constant":
        return PiecewiseConstantPrior(tuple(d["edges"]), tuple(d["heights"]))
    if kind == "uniform":
        return UniformPrior(float(d["lo"]), float(d["hi"]))
    return TruncatedExponentialPrior(float(d["lo"]), float(d["hi"]), float(d["rate"]))


# ---------------------------------------------------------------------------
# Instances and allocations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KnownInstance:
    """Users with known mean consumption ``mean_rates`` sharing ``budget``."""

    costs: tuple[CostFunction, ...]
    mean_rates: np.ndarray
    budget: float
    bank: CostBank = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        rates = np.array(self.mean_rates, dtype=float).reshape(-1)
        rates.setflags(write=False)
        object.__setattr__(self, "mean_rates", rates)
        object.__setattr__(self, "budget", float(self.budget))
        if len(self.costs) != rates.size:
            raise ValueError(f"{len(self.costs)} costs but {rates.size} mean rates")
        object.__setattr__(self, "bank", CostBank(self.costs))

    @property
    def m(self) -> int:
        return len(self.costs)


@dataclass(frozen=True, eq=False)
class UnknownInstance:
    """Users whose mean consumption is only known through a prior."""

    costs: tuple[CostFunction, ...]
    priors: tuple[Prior, ...]
    budget: float
    symmetric: bool = False

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "priors", tuple(self.priors))
        object.__setattr__(self, "budget", float(self.budget))
        if len(self.costs) != len(self.priors):
            raise ValueError(f"{len(self.costs)} costs but {len(self.priors)} priors")

    @property
    def m(self) -> int:
        return len(self.costs)

    @classmethod
    def symmetric_from(cls, cost: CostFunction, prior: Prior, m: int, budget: float):
        return cls((cost,) * m, (prior,) * m, budget, symmetric=True)


Instance = Union[KnownInstance, UnknownInstance]


@dataclass(frozen=True, eq=False)
class Allocation:
    """Static service rates ``rates`` drawn from ``budget``."""

    rates: np.ndarray
    budget: float

    def __post_init__(self):
        r = np.array(self.rates, dtype=float).reshape(-1)
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "budget", float(self.budget))

    @property
    def m(self) -> int:
        return self.rates.size

    @property
    def slack(self) -> float:
        return self.budget - math.fsum(self.rates)

    def problems(self, tol: float = FEAS_TOL) -> list[str]:
        out = []
        if np.any(~np.isfinite(self.rates)):
            out.append("allocation contains non-finite rates")
        elif np.any(self.rates < 0):
            out.append(f"negative rate for user {int(np.argmin(self.rates))}")
        if self.slack < -tol:
            out.append(f"allocation exceeds budget by {-self.slack:.3g}")
        return out

    def check(self, tol: float = FEAS_TOL) -> "Allocation":
        problems = self.problems(tol)
        if problems:
            raise FeasibilityError("; ".join(problems))
        return self

    def __eq__(self, other):
        if not isinstance(other, Allocation):
            return NotImplemented
        return self.budget == other.budget and np.array_equal(self.rates, other.rates)

    __hash__ = None


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _grid_problems(cost: CostFunction, upper: float) -> list[str]:
    problems = []
    v0 = float(cost(0.0))
    if v0 != 0.0:
        problems.append(f"V(0) != 0 (V(0) = {v0:g})")
    x = np.linspace(0.0, max(upper, 1e-12), VALIDATION_GRID)
    v = cost(x)
    scale = max(1.0, float(np.max(np.abs(v))))
    if np.any(np.diff(v) < -IDENTITY_RTOL * scale):
        problems.append("cost is not monotone increasing on the validation grid")
    if np.any(v[:-2] - 2 * v[1:-1] + v[2:] > IDENTITY_RTOL * scale):
        problems.append("cost is not concave on the validation grid")
    return problems


def _cost_problems(costs, uppers, thorough: bool, bank: CostBank | None = None):
    problems = []
    if bank is not None and not thorough:
        for i, msg in bank.parameter_problems():
            problems.append(f"users[{i}].cost: {msg}")
        return problems
    seen: dict[tuple[CostFunction, float], list[str]] = {}
    for i, (c, up) in enumerate(zip(costs, uppers)):
        key = (c, float(up))
        if key not in seen:
            seen[key] = c.structural_problems() + _grid_problems(c, up)
        for msg in dict.fromkeys(seen[key]):
            problems.append(f"users[{i}].cost: {msg}")
    return problems


def _prior_problems(prior: Prior) -> list[str]:
    from .quadrature import integrate

    problems = prior.structural_problems()
    if problems:
        return problems
    total = integrate(prior.pdf, prior.lo, prior.hi, points=prior.kinks())
    if abs(total - 1.0) > 1e-9:
        problems.append(f"prior does not integrate to 1 (integral = {total:.12g})")
    f = np.linspace(prior.lo, prior.hi, VALIDATION_GRID)
    if np.any(np.diff(prior.pdf(f)) > 1e-12):
        problems.append("prior density is not non-increasing")
    return problems


def validate_instance(instance: Instance, thorough: bool = True) -> list[str]:
    """Return the list of violated invariants; empty means valid.

    With ``thorough=False`` the closed-form cost families are checked through
    their parameters only, which keeps validation O(m) for very large
    instances.  Piecewise-linear costs are always checked structurally.
    """
    problems: list[str] = []
    m = instance.m
    if m < 1:
        return ["instance must have at least one user"]
    if not (math.isfinite(instance.budget) and instance.budget >= 0):
        problems.append("budget must be non-negative and finite")
    if isinstance(instance, KnownInstance):
        if instance.budget <= 0:
            problems.append("budget must be positive")
        f = instance.mean_rates
        bad = np.flatnonzero(~(np.isfinite(f) & (f > 0)))
        problems.extend(f"users[{i}].mean_rate: mean rate must be > 0" for i in bad)
        uppers = np.where(np.isfinite(f) & (f > 0), f, 1.0)
        problems.extend(_cost_problems(instance.costs, uppers, thorough, instance.bank))
        return problems

    prior_msgs: dict[Prior, list[str]] = {}
    for i, p in enumerate(instance.priors):
        if p not in prior_msgs:
            prior_msgs[p] = _prior_problems(p)
        problems.extend(f"users[{i}].prior: {msg}" for msg in prior_msgs[p])
    uppers = [p.hi if math.isfinite(p.hi) and p.hi > 0 else 1.0 for p in instance.priors]
    problems.extend(_cost_problems(instance.costs, uppers, True))
    if instance.symmetric:
        problems.extend(_symmetry_problems(instance))
    return problems


def _symmetry_problems(instance: UnknownInstance) -> list[str]:
    problems = []
    p0 = instance.priors[0]
    for i, p in enumerate(instance.priors[1:], start=1):
        if p != p0:
            problems.append(f"users[{i}].prior: symmetric instance requires identical priors")
    c0 = instance.costs[0]
    upper = max(p.hi for p in instance.priors if math.isfinite(p.hi))
    x = np.linspace(0.0, max(upper, 1e-12), VALIDATION_GRID)
    v0 = c0(x)
    for i, c in enumerate(instance.costs[1:], start=1):
        if c == c0:
            continue
        v = c(x)
        if np.any(np.abs(v - v0) > IDENTITY_RTOL * np.maximum(1.0, np.abs(v0))):
            problems.append(f"users[{i}].cost: symmetric instance requires identical costs")
    return problems


def ensure_valid(instance: Instance, thorough: bool = True) -> None:
    problems = validate_instance(instance, thorough=thorough)
    if problems:
        raise InvalidInstanceError(problems)
