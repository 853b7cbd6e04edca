"""Closed-form double-integrator motion with stop-and-hold semantics.

Every function here accepts plain floats or numpy arrays (broadcast
elementwise), so the same formulas drive a single run and a batch of runs.
A vehicle braking to ``v = 0`` stays stopped for the rest of the interval.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "PointState",
    "GhostState",
    "Evolution",
    "evolve",
    "evolve_const_accel",
    "stop_time",
    "stopping_distance",
    "segment_min_gap",
    "min_gap_on_segment",
    "first_contact_time",
    "ghost_trajectory",
]


def _scalar(a):
    a = np.asarray(a)
    return a[()] if a.ndim == 0 else a


@dataclass(frozen=True)
class PointState:
    x: float
    v: float


@dataclass(frozen=True)
class GhostState:
    """Bounding trajectories: follower ghost from above, lead ghost from below."""

    x_gf: float
    v_gf: float
    a_gf: float
    x_gl: float
    v_gl: float
    a_gl: float


@dataclass(frozen=True)
class Evolution:
    state: PointState
    stopped: bool
    t_stop: float  # inf when the vehicle never stops within the interval


def stop_time(v, a):
    """Time until ``v`` reaches zero under ``a``; ``inf`` unless braking."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ts = np.where(a < 0.0, v / -a, np.inf)
    return _scalar(ts)


def evolve(x, v, a, dt):
    """Advance ``(x, v)`` under constant ``a`` for ``dt``.

    Returns ``(x, v, stopped, t_stop)``; ``stopped`` is true when the vehicle
    came to rest within ``[0, dt]``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    dt = np.asarray(dt, dtype=float)
    ts = np.asarray(stop_time(v, a))
    stopped = ts <= dt
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x_stop = x + v * v / (2.0 * -a)
    x_run = x + v * dt + 0.5 * a * dt * dt
    x_new = np.where(stopped, x_stop, x_run)
    v_new = np.where(stopped, 0.0, np.maximum(v + a * dt, 0.0))
    return _scalar(x_new), _scalar(v_new), _scalar(stopped), _scalar(ts)


def evolve_const_accel(s: PointState, a: float, dt: float) -> Evolution:
    if dt < 0:
        raise DomainError(f"negative duration dt={dt}")
    if s.v < 0:
        raise DomainError(f"negative velocity v={s.v}")
    x, v, stopped, ts = evolve(s.x, s.v, a, dt)
    return Evolution(PointState(float(x), float(v)), bool(stopped),
                     float(ts) if stopped else float("inf"))


def stopping_distance(v, decel):
    """Distance covered braking from ``v`` at constant ``decel`` to rest."""
    if np.any(np.asarray(decel) <= 0):
        raise DomainError("stopping_distance needs decel > 0")
    v = np.asarray(v, dtype=float)
    return _scalar(v * v / (2.0 * np.asarray(decel, dtype=float)))


def segment_min_gap(xf, vf, af, xl, vl, al, dt):
    """Exact minimum of ``x_l(t) - x_f(t)`` over ``[0, dt]`` (array-generic).

    Both vehicles follow stop-and-hold motion, so the gap is piecewise
    quadratic with breaks at the two stop times.  Its only stationary point
    that is not a break lies where the velocities match while both still
    move; the minimum is taken over that point and the breaks.
    Returns ``(min_gap, t_at_min)``.
    """
    xf, vf, af, xl, vl, al, dt = np.broadcast_arrays(
        *(np.asarray(q, dtype=float) for q in (xf, vf, af, xl, vl, al, dt)))
    tsf = np.asarray(stop_time(vf, af))
    tsl = np.asarray(stop_time(vl, al))
    both_moving = np.minimum(np.minimum(tsf, tsl), dt)
    da = al - af
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t_eq = np.where(da != 0.0, (vf - vl) / da, 0.0)
    t_eq = np.clip(np.nan_to_num(t_eq, nan=0.0), 0.0, both_moving)
    cands = np.stack([np.zeros_like(dt), np.minimum(tsf, dt),
                      np.minimum(tsl, dt), t_eq, dt])
    pf = evolve(xf, vf, af, cands)[0]
    pl = evolve(xl, vl, al, cands)[0]
    gaps = np.asarray(pl - pf)
    idx = np.argmin(gaps, axis=0)
    gmin = np.take_along_axis(gaps, idx[None], axis=0)[0]
    tmin = np.take_along_axis(cands, idx[None], axis=0)[0]
    return _scalar(gmin), _scalar(tmin)


def min_gap_on_segment(follower: PointState, a_f: float, lead: PointState,
                       a_l: float, dt: float):
    if dt < 0:
        raise DomainError(f"negative duration dt={dt}")
    g, t = segment_min_gap(follower.x, follower.v, a_f, lead.x, lead.v, a_l, dt)
    return float(g), float(t)


def _earliest_root(c0, c1, c2, lo, hi):
    """Smallest root of ``c0 + c1 s + c2 s^2`` in ``[lo, hi]``, else None."""
    if c2 == 0.0:
        if c1 == 0.0:
            return lo if c0 <= 0.0 else None
        roots = [-c0 / c1]
    else:
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc < 0.0:
            return None
        sq = np.sqrt(disc)
        q = -0.5 * (c1 + np.copysign(sq, c1))
        roots = [q / c2] + ([c0 / q] if q != 0.0 else [])
    good = sorted(r for r in roots if lo <= r <= hi)
    return good[0] if good else None


def first_contact_time(xf, vf, af, xl, vl, al, dt):
    """Earliest ``t`` in ``[0, dt]`` with ``x_l(t) - x_f(t) <= 0``, or None."""
    xf, vf, af, xl, vl, al, dt = (float(q) for q in (xf, vf, af, xl, vl, al, dt))
    if xl - xf <= 0.0:
        return 0.0
    breaks = sorted({0.0, dt, *(t for t in (float(stop_time(vf, af)),
                                            float(stop_time(vl, al))) if t < dt)})
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        pf, uf = (float(q) for q in evolve(xf, vf, af, lo)[:2])
        pl, ul = (float(q) for q in evolve(xl, vl, al, lo)[:2])
        ef = af if uf > 0.0 or af > 0.0 else 0.0
        el = al if ul > 0.0 or al > 0.0 else 0.0
        # gap(lo + s) = g0 + (ul - uf) s + (el - ef) s^2 / 2 on this piece
        r = _earliest_root(pl - pf, ul - uf, 0.5 * (el - ef), 0.0, hi - lo)
        if r is not None:
            return lo + r
    return None


def ghost_trajectory(g0: GhostState, t: float) -> GhostState:
    """Evolve both ghosts for ``t``; a ghost reaching zero speed holds there."""
    if np.any(np.asarray(t) < 0):
        raise DomainError(f"negative duration t={t}")
    xf, vf, _, _ = evolve(g0.x_gf, g0.v_gf, g0.a_gf, t)
    xl, vl, stopped_l, _ = evolve(g0.x_gl, g0.v_gl, g0.a_gl, t)
    a_gl = np.where(stopped_l, 0.0, g0.a_gl)
    return GhostState(xf, vf, g0.a_gf, xl, vl, _scalar(a_gl))
