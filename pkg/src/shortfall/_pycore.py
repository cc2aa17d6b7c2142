"""Pure-Python kernels; reference behaviour for the compiled ``_core``.

Both modules expose the same functions with the same encodings:

cost codes    0 linear [slope], 1 sqrt [scale], 2 log1p [scale],
              3 piecewise linear [n, x_0..x_{n-1}, y_0..y_{n-1}]
prior codes   0 uniform [lo, hi], 1 truncated exponential [lo, hi, rate, mass],
              2 piecewise constant [k, e_0..e_k, h_0..h_{k-1}]
"""
import numpy as np

from .quadrature import integrate


def queue_path(S, F, cap, q0, q_out, kappa_out):
    """Run the buffer recurrence in place; returns the queue after the last slot.

    ``q_out[t]`` receives the level at the start of slot ``t`` and
    ``kappa_out[t]`` the shortfall in that slot.  ``cap`` is ``inf`` for an
    unbounded buffer.
    """
    s_list = S.tolist()
    f_list = F.tolist()
    qs = [0.0] * len(s_list)
    ks = [0.0] * len(s_list)
    q = float(q0)
    for t in range(len(s_list)):
        qs[t] = q
        x = q + s_list[t] - f_list[t]
        if x < 0.0:
            ks[t] = -x
            q = 0.0
        else:
            q = x if x < cap else cap
    q_out[:] = qs
    kappa_out[:] = ks
    return q


def _cost_eval(code, params):
    if code == 0:
        slope = params[0]
        return lambda x: slope * x
    if code == 1:
        scale = params[0]
        return lambda x: scale * np.sqrt(x)
    if code == 2:
        scale = params[0]
        return lambda x: scale * np.log1p(x)
    n = int(params[0])
    xs = np.asarray(params[1:1 + n])
    ys = np.asarray(params[1 + n:1 + 2 * n])
    last = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])

    def pl(x):
        out = np.interp(x, xs, ys)
        return np.where(x > xs[-1], ys[-1] + last * (x - xs[-1]), out)

    return pl


def _cost_kinks(code, params):
    if code != 3:
        return []
    n = int(params[0])
    return [params[1 + k] for k in range(1, n - 1)]


def _prior_eval(code, params):
    if code == 0:
        dens = 1.0 / (params[1] - params[0])
        return lambda f: np.full_like(f, dens)
    if code == 1:
        lo, rate, mass = params[0], params[2], params[3]
        return lambda f: rate * np.exp(-rate * (f - lo)) / mass
    k = int(params[0])
    edges = np.asarray(params[1:2 + k])
    heights = np.asarray(params[2 + k:2 + 2 * k])

    def pc(f):
        idx = np.clip(np.searchsorted(edges, f, side="right") - 1, 0, k - 1)
        return heights[idx]

    return pc


def _prior_support(code, params):
    if code == 2:
        k = int(params[0])
        return params[1], params[1 + k], [params[1 + j] for j in range(1, k)]
    return params[0], params[1], []


def expected_cost_batch(cost_code, cost_params, prior_code, prior_params, s, tol, max_depth):
    """``K(s) = int_{max(s,a)}^b V(f - s) p(f) df`` for every entry of ``s``."""
    cost_params = [float(v) for v in cost_params]
    prior_params = [float(v) for v in prior_params]
    V = _cost_eval(cost_code, cost_params)
    p = _prior_eval(prior_code, prior_params)
    lo, hi, edges = _prior_support(prior_code, prior_params)
    ckinks = _cost_kinks(cost_code, cost_params)
    out = np.empty(len(s))
    for j, sj in enumerate(np.asarray(s, dtype=float).tolist()):
        lower = sj if sj > lo else lo
        if lower >= hi:
            out[j] = 0.0
            continue
        points = [sj + x for x in ckinks] + edges

        def integrand(f, sj=sj):
            return V(np.maximum(f - sj, 0.0)) * p(f)

        out[j] = integrate(integrand, lower, hi, tol, max_depth, points)
    return out
