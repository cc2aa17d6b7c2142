# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Same contract and encodings as ``_pycore``."""
import numpy as np

from libc.math cimport sqrt, log1p, exp, fmax
from libc.stdlib cimport malloc, free, qsort

cdef double[8] XGK = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
]
cdef double[8] WGK = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
]
cdef double[4] WG = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
]


def queue_path(const double[::1] S, const double[::1] F, double cap, double q0,
               double[::1] q_out, double[::1] kappa_out):
    cdef Py_ssize_t t, n = S.shape[0]
    cdef double q = q0, x
    for t in range(n):
        q_out[t] = q
        x = q + S[t] - F[t]
        if x < 0.0:
            kappa_out[t] = -x
            q = 0.0
        else:
            kappa_out[t] = 0.0
            q = x if x < cap else cap
    return q


cdef struct Integrand:
    int cost_code
    const double* cp
    int prior_code
    const double* pp
    double s


cdef inline double cost_value(const Integrand* g, double x) nogil:
    cdef int n, k
    cdef const double* xs
    cdef const double* ys
    if g.cost_code == 0:
        return g.cp[0] * x
    if g.cost_code == 1:
        return g.cp[0] * sqrt(x)
    if g.cost_code == 2:
        return g.cp[0] * log1p(x)
    n = <int>g.cp[0]
    xs = g.cp + 1
    ys = g.cp + 1 + n
    if x <= xs[0]:
        return ys[0]
    if x > xs[n - 1]:
        return ys[n - 1] + (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]) * (x - xs[n - 1])
    k = 0
    while k < n - 2 and x > xs[k + 1]:
        k += 1
    return ys[k] + (ys[k + 1] - ys[k]) * (x - xs[k]) / (xs[k + 1] - xs[k])


cdef inline double prior_density(const Integrand* g, double f) nogil:
    cdef int k, j
    cdef const double* e
    if g.prior_code == 0:
        return 1.0 / (g.pp[1] - g.pp[0])
    if g.prior_code == 1:
        return g.pp[2] * exp(-g.pp[2] * (f - g.pp[0])) / g.pp[3]
    k = <int>g.pp[0]
    e = g.pp + 1
    j = 0
    while j < k - 1 and f >= e[j + 1]:
        j += 1
    return g.pp[2 + k + j]


cdef inline double integrand(const Integrand* g, double f) nogil:
    return cost_value(g, fmax(f - g.s, 0.0)) * prior_density(g, f)


cdef double gk15(const Integrand* g, double a, double b, double* err) nogil:
    cdef double c = 0.5 * (a + b), h = 0.5 * (b - a)
    cdef double fc = integrand(g, c)
    cdef double rk = WGK[7] * fc, rg = WG[3] * fc
    cdef double y1, y2
    cdef int j
    for j in range(7):
        y1 = integrand(g, c - h * XGK[j])
        y2 = integrand(g, c + h * XGK[j])
        rk += WGK[j] * (y1 + y2)
        if j % 2 == 1:
            rg += WG[j // 2] * (y1 + y2)
    rk *= h
    rg *= h
    err[0] = rk - rg if rk > rg else rg - rk
    return rk


cdef double adapt(const Integrand* g, double a, double b, double tol, int depth,
                  int max_depth) nogil:
    cdef double err
    cdef double k = gk15(g, a, b, &err)
    cdef double mid
    if err <= tol or depth >= max_depth:
        return k
    mid = 0.5 * (a + b)
    return (adapt(g, a, mid, 0.5 * tol, depth + 1, max_depth)
            + adapt(g, mid, b, 0.5 * tol, depth + 1, max_depth))


cdef int cmp_double(const void* x, const void* y) noexcept nogil:
    cdef double a = (<const double*>x)[0], b = (<const double*>y)[0]
    return (a > b) - (a < b)


def expected_cost_batch(int cost_code, const double[::1] cost_params, int prior_code,
                        const double[::1] prior_params, const double[::1] s,
                        double tol, int max_depth):
    cdef Py_ssize_t j, n = s.shape[0]
    cdef Integrand g
    cdef double lo, hi, lower, total, acc, prev, p
    cdef int nk = 0, i, k, npl = 0, npc = 0
    cdef double* pts
    out = np.empty(n)
    cdef double[::1] res = out

    g.cost_code = cost_code
    g.cp = &cost_params[0]
    g.prior_code = prior_code
    g.pp = &prior_params[0]
    if prior_code == 2:
        npc = <int>prior_params[0]
        lo = prior_params[1]
        hi = prior_params[1 + npc]
    else:
        lo = prior_params[0]
        hi = prior_params[1]
    if cost_code == 3:
        npl = <int>cost_params[0]
    pts = <double*>malloc((npl + npc + 2) * sizeof(double))
    try:
        for j in range(n):
            g.s = s[j]
            lower = s[j] if s[j] > lo else lo
            if lower >= hi:
                res[j] = 0.0
                continue
            # kinks strictly inside (lower, hi), sorted and deduplicated
            nk = 0
            for i in range(1, npl - 1):
                p = s[j] + cost_params[1 + i]
                if lower < p < hi:
                    pts[nk] = p
                    nk += 1
            for i in range(1, npc):
                p = prior_params[1 + i]
                if lower < p < hi:
                    pts[nk] = p
                    nk += 1
            qsort(pts, nk, sizeof(double), cmp_double)
            total = hi - lower
            acc = 0.0
            prev = lower
            for i in range(nk + 1):
                p = pts[i] if i < nk else hi
                if p == prev:
                    continue
                acc += adapt(&g, prev, p, tol * (p - prev) / total, 0, max_depth)
                prev = p
            res[j] = acc
    finally:
        free(pts)
    return out
