"""Instance generators and hand-rolled reference oracles shared by the tests."""
import itertools
import math

import numpy as np

from shortfall import (
    KnownInstance,
    Linear,
    Log1p,
    PiecewiseLinearConcave,
    Sqrt,
    TruncatedExponentialPrior,
    UniformPrior,
    UnknownInstance,
)

COST_KINDS = ("linear", "sqrt", "log1p", "piecewise_linear")


def random_cost(rng: np.random.Generator, kind: str):
    if kind == "linear":
        return Linear(float(rng.uniform(0.5, 3.0)))
    if kind == "sqrt":
        return Sqrt(float(rng.uniform(0.5, 3.0)))
    if kind == "log1p":
        return Log1p(float(rng.uniform(0.5, 3.0)))
    k = int(rng.integers(1, 4))
    widths = rng.uniform(0.3, 2.0, k)
    slopes = np.sort(rng.uniform(0.1, 3.0, k))[::-1]
    xs = np.concatenate([[0.0], np.cumsum(widths)])
    ys = np.concatenate([[0.0], np.cumsum(widths * slopes)])
    return PiecewiseLinearConcave(tuple(zip(xs.tolist(), ys.tolist())))


def random_known(rng: np.random.Generator, m: int, kinds=COST_KINDS) -> KnownInstance:
    costs = tuple(random_cost(rng, kinds[int(rng.integers(len(kinds)))]) for _ in range(m))
    f = rng.uniform(0.2, 5.0, m)
    budget = float(rng.uniform(0.01, 0.99) * f.sum())
    return KnownInstance(costs, f, budget)


def random_symmetric(rng: np.random.Generator, m: int) -> UnknownInstance:
    lo = float(rng.uniform(0.0, 2.0))
    hi = lo + float(rng.uniform(0.3, 2.0))
    if rng.random() < 0.5:
        prior = UniformPrior(lo, hi)
    else:
        prior = TruncatedExponentialPrior(lo, hi, float(rng.uniform(0.2, 3.0)))
    cost = Linear(float(rng.uniform(0.5, 2.0))) if rng.random() < 0.5 else Sqrt(float(rng.uniform(0.5, 2.0)))
    budget = float(rng.uniform(0.0, 1.1) * m * hi)
    return UnknownInstance.symmetric_from(cost, prior, m, budget)


def hand_corner_oracle(costs, f, budget):
    """Minimum of the true objective over all vertices, written with plain loops."""
    m = len(f)
    best = math.inf
    for r in range(m + 1):
        for subset in itertools.combinations(range(m), r):
            used = sum(f[i] for i in subset)
            if used > budget + 1e-9:
                continue
            base = [f[i] if i in subset else 0.0 for i in range(m)]
            candidates = [base]
            for j in range(m):
                if j not in subset:
                    s = list(base)
                    s[j] = min(f[j], max(budget - used, 0.0))
                    candidates.append(s)
            for s in candidates:
                val = sum(costs[i](max(f[i] - s[i], 0.0)) for i in range(m)) / m
                best = min(best, val)
    return best


def inside_count(s, f):
    return int(np.count_nonzero((s > 0) & (s < f)))
