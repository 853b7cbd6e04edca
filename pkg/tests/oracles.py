"""Reference computations used only by the tests.

Each one is built from a different method than the code it checks:
time-stepping instead of closed forms, dense sampling instead of analytic
minimisation.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def euler_integrate(x0, v0, a, T, h):
    """Explicit Euler with the velocity clamped at zero, vectorised over draws."""
    x = x0.copy()
    v = v0.copy()
    n = x.size
    steps = int(round(T / h))
    for _ in range(steps):
        for i in range(n):
            x[i] += h * v[i]
            v[i] = max(v[i] + h * a[i], 0.0)
    return x, v


@numba.njit(cache=True)
def _pos(x, v, a, t):
    if a < 0.0 and v + a * t <= 0.0:
        return x - v * v / (2.0 * a)
    return x + v * t + 0.5 * a * t * t


@numba.njit(cache=True)
def dense_min_gap(xf, vf, af, xl, vl, al, dt, res):
    """Minimum sampled gap on a grid of spacing ``res`` (endpoint included)."""
    n = xf.size
    out = np.empty(n)
    for i in range(n):
        m = int(np.ceil(dt[i] / res))
        best = np.inf
        for j in range(m + 1):
            t = min(j * res, dt[i])
            g = _pos(xl[i], vl[i], al[i], t) - _pos(xf[i], vf[i], af[i], t)
            if g < best:
                best = g
        out[i] = best
    return out


@numba.njit(cache=True)
def step_worst_case(gap, v_f, u, A, B, b, eps, h):
    """Time-stepped worst case: follower +A for eps then -b, lead -B from ``u``.

    Each step applies the exact constant-acceleration update for ``h``
    (clamped at rest); returns the smallest gap seen.
    """
    n = gap.size
    out = np.empty(n)
    for i in range(n):
        xf, vf, xl, vl = 0.0, v_f[i], gap[i], u[i]
        best = gap[i]
        t = 0.0
        while vf > 0.0 or vl > 0.0 or t < eps:
            af = A if t < eps - 1e-12 else -b
            for_ = min(h, eps - t) if t < eps - 1e-12 else h
            xf = _pos(xf, vf, af, for_)
            vf = max(vf + af * for_, 0.0)
            xl = _pos(xl, vl, -B, for_)
            vl = max(vl - B * for_, 0.0)
            t += for_
            if xl - xf < best:
                best = xl - xf
        out[i] = best
    return out
