"""Compare the compiled kernels against the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Without the compiled
extension only the fallback timings are printed.
"""
import math
import time

import numpy as np

from shortfall import Sqrt, TruncatedExponentialPrior, UniformPrior, Linear
from shortfall._backend import HAVE_COMPILED, encode_cost, encode_prior, get_kernels
from shortfall.quadrature import DEFAULT_TOL, MAX_DEPTH


def best_of(fn, repeats=3):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_queue(kern, T):
    rng = np.random.default_rng(0)
    S = np.full(T, 0.9)
    F = rng.uniform(0.0, 2.0, T)
    q = np.empty(T)
    k = np.empty(T)
    return best_of(lambda: kern.queue_path(S, F, math.inf, 0.0, q, k))


def bench_expected_cost(kern, cost, prior, n):
    cc, cp = encode_cost(cost)
    pc, pp = encode_prior(prior)
    s = np.linspace(0.0, prior.hi, n)
    return best_of(lambda: kern.expected_cost_batch(cc, cp, pc, pp, s, DEFAULT_TOL, MAX_DEPTH))


def main():
    backends = ["python"] + (["compiled"] if HAVE_COMPILED else [])
    cases = [
        ("queue_path, T = 1e6", lambda k: bench_queue(k, 1_000_000)),
        ("K, linear / uniform, 1000 rates",
         lambda k: bench_expected_cost(k, Linear(1.0), UniformPrior(1.0, 2.0), 1000)),
        ("K, sqrt / truncated exp, 1000 rates",
         lambda k: bench_expected_cost(k, Sqrt(1.0), TruncatedExponentialPrior(1.0, 3.0, 1.0), 1000)),
    ]
    print(f"{'case':40s}" + "".join(f"{b:>14s}" for b in backends) + ("   speedup" if HAVE_COMPILED else ""))
    for name, fn in cases:
        times = [fn(get_kernels(b)) for b in backends]
        row = f"{name:40s}" + "".join(f"{t * 1e3:11.1f} ms" for t in times)
        if HAVE_COMPILED:
            row += f"   {times[0] / times[1]:7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
