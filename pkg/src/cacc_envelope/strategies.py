"""Concrete resolutions of the model's nondeterministic choices.

Follower policies pick ``a_f`` from the admissible set; lead strategies pick
``a_l >= -B``; timing laws pick the ``dyn_t`` duration.  Everything operates
on per-run arrays and draws from the generator passed in, so a run is
replayable from its seed.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .envelope import AccelSet, Params, WorldState
from .errors import ConfigError

__all__ = [
    "FollowerPolicy",
    "MaxSpeed",
    "AlwaysBrake",
    "RandomAdmissible",
    "ScriptedHuman",
    "PolicyMixture",
    "LeadStrategy",
    "ConstantLead",
    "FullBrakeLead",
    "BangBangLead",
    "RandomLead",
    "LeadMixture",
    "TimingLaw",
    "make_policy",
    "make_lead",
]


def _n(w: WorldState) -> int:
    return np.size(w.v_f)


class FollowerPolicy:
    name = "policy"

    def __call__(self, w: WorldState, p: Params, allowed: AccelSet,
                 rng: np.random.Generator, now) -> np.ndarray:
        raise NotImplementedError


class MaxSpeed(FollowerPolicy):
    """Accelerate to road speed ``V`` and hold it; brake at ``-b`` otherwise.

    ``A`` while driving is allowed and ``v_f < V``, ``0`` when allowed and
    ``v_f == V``, else ``-b``.
    """

    name = "max_speed"

    def __init__(self, V=30.0):
        self.V = V

    def __call__(self, w, p, allowed, rng, now):
        v_f = np.asarray(w.v_f)
        drive = np.asarray(allowed.drive)
        a = np.where(drive & (v_f < self.V), p.A,
                     np.where(drive & (v_f == self.V), 0.0, -np.asarray(p.b)))
        return np.broadcast_to(a, (_n(w),)).astype(float)


class AlwaysBrake(FollowerPolicy):
    name = "always_brake"

    def __init__(self, decel=None):
        self.decel = decel

    def __call__(self, w, p, allowed, rng, now):
        d = p.b if self.decel is None else self.decel
        return np.broadcast_to(-np.asarray(d, dtype=float), (_n(w),)).copy()


class RandomAdmissible(FollowerPolicy):
    """Uniform draw from the drive interval when allowed, else from braking.

    A stopped follower outside the drive guard holds at 0 with probability
    ``p_hold``.
    """

    name = "random_admissible"

    def __init__(self, p_hold=0.5):
        self.p_hold = p_hold

    def __call__(self, w, p, allowed, rng, now):
        n = _n(w)
        u, coin = rng.random(n), rng.random(n)
        A, B, b = (np.asarray(q, dtype=float) for q in (p.A, p.B, p.b))
        drive = -B + u * (A + B)
        brake = -B + u * (B - b)
        hold = np.asarray(allowed.stop) & (coin < self.p_hold)
        return np.where(allowed.drive, drive, np.where(hold, 0.0, brake))


class ScriptedHuman(FollowerPolicy):
    """Human acceleration schedule, overridden whenever driving is not allowed.

    ``times`` are knot times (s, ascending, first 0); ``accels`` holds the
    requested acceleration from each knot on, shaped ``(k,)`` or ``(k, n)``
    for per-run schedules.  When driving is allowed (manual) the request is
    clipped to ``[-B, A]``; otherwise the controller takes over (auto): it
    holds a stopped vehicle at 0 and otherwise brakes with the request
    clipped to ``[-B, -b]``.
    """

    name = "scripted_human"

    def __init__(self, times: Sequence[float], accels):
        self.times = np.asarray(times, dtype=float)
        self.accels = np.asarray(accels, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.accels):
            raise ConfigError("schedule times and accels must align")
        if len(self.times) == 0 or np.any(np.diff(self.times) < 0):
            raise ConfigError("schedule times must be non-empty and ascending")

    @classmethod
    def random(cls, rng: np.random.Generator, n: int, horizon: float, knot=1.0,
               lo=-6.0, hi=4.0):
        times = np.arange(0.0, horizon + knot, knot)
        return cls(times, rng.uniform(lo, hi, size=(len(times), n)))

    def request(self, now):
        now = np.asarray(now, dtype=float)
        idx = np.clip(np.searchsorted(self.times, now, side="right") - 1, 0, None)
        if self.accels.ndim == 1:
            return self.accels[idx]
        return np.take_along_axis(self.accels, np.atleast_1d(idx)[None, :], axis=0)[0]

    def __call__(self, w, p, allowed, rng, now):
        req = np.broadcast_to(self.request(now), (_n(w),))
        A, B, b = (np.asarray(q, dtype=float) for q in (p.A, p.B, p.b))
        manual = np.clip(req, -B, A)
        auto = np.where(allowed.stop, 0.0, np.clip(req, -B, -b))
        return np.where(allowed.drive, manual, auto)


class PolicyMixture(FollowerPolicy):
    """Per-run choice of policy: run ``i`` follows ``policies[index[i]]``."""

    name = "mixture"

    def __init__(self, policies: Sequence[FollowerPolicy], index):
        self.policies = list(policies)
        self.index = np.asarray(index)

    def __call__(self, w, p, allowed, rng, now):
        n = _n(w)
        picks = np.stack([np.broadcast_to(pol(w, p, allowed, rng, now), (n,))
                          for pol in self.policies])
        return np.take_along_axis(picks, self.index[None, :], axis=0)[0]


class LeadStrategy:
    """Lead acceleration choice.  ``v_max`` caps speed softly (no acceleration above it)."""

    name = "lead"

    def __init__(self, v_max=None):
        self.v_max = v_max

    def choose(self, v_l, p: Params, a_max, rng, n) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, v_l, p: Params, a_max, rng: np.random.Generator) -> np.ndarray:
        n = np.size(v_l)
        a = np.broadcast_to(self.choose(v_l, p, a_max, rng, n), (n,)).astype(float)
        if self.v_max is not None:
            a = np.where(np.asarray(v_l) >= self.v_max, np.minimum(a, 0.0), a)
        return a


class ConstantLead(LeadStrategy):
    name = "constant"

    def __init__(self, accel=0.0, v_max=None):
        super().__init__(v_max)
        self.accel = accel

    def choose(self, v_l, p, a_max, rng, n):
        return np.full(n, self.accel, dtype=float)


class FullBrakeLead(LeadStrategy):
    """The worst admissible lead: always ``-B``."""

    name = "full_brake"

    def choose(self, v_l, p, a_max, rng, n):
        return np.broadcast_to(-np.asarray(p.B, dtype=float), (n,))


class BangBangLead(LeadStrategy):
    """Alternates between ``-B`` and ``a_max``, switching with ``switch_prob`` per cycle."""

    name = "bang_bang"

    def __init__(self, switch_prob=0.2, v_max=None):
        super().__init__(v_max)
        self.switch_prob = switch_prob
        self._braking = None

    def choose(self, v_l, p, a_max, rng, n):
        if self._braking is None or len(self._braking) != n:
            self._braking = np.zeros(n, dtype=bool)
        self._braking ^= rng.random(n) < self.switch_prob
        return np.where(self._braking, -np.asarray(p.B, dtype=float), a_max)


class RandomLead(LeadStrategy):
    name = "random"

    def choose(self, v_l, p, a_max, rng, n):
        B = np.asarray(p.B, dtype=float)
        return -B + rng.random(n) * (np.asarray(a_max) + B)


class LeadMixture(LeadStrategy):
    name = "mixture"

    def __init__(self, strategies: Sequence[LeadStrategy], index, v_max=None):
        super().__init__(v_max)
        self.strategies = list(strategies)
        self.index = np.asarray(index)

    def choose(self, v_l, p, a_max, rng, n):
        picks = np.stack([s(v_l, p, a_max, rng) for s in self.strategies])
        return np.take_along_axis(picks, self.index[None, :], axis=0)[0]


class TimingLaw:
    """Duration ``t`` of ``dyn_t`` given the cycle's delay ``t_d``.

    ``fill``: ``t = eps - t_d`` (every cycle uses the full receiving period,
    the adversarial default); ``uniform``: ``t`` uniform on ``[0, eps - t_d]``;
    ``period``: ``t = min(t_l, eps - t_d)`` for the lead's transmit period.
    ``kind`` may be an int array of per-run codes 0/1/2 in that order.
    """

    KINDS = ("fill", "uniform", "period")

    def __init__(self, kind="fill", t_l=None):
        if isinstance(kind, str):
            if kind not in self.KINDS:
                raise ConfigError(f"unknown timing law {kind!r}")
            kind = self.KINDS.index(kind)
        self.kind = np.asarray(kind)
        if np.any(self.kind == 2) and t_l is None:
            raise ConfigError("period timing law needs t_l")
        self.t_l = t_l

    def sample(self, rng: np.random.Generator, t_d, eps, n: int) -> np.ndarray:
        room = np.maximum(np.asarray(eps, dtype=float) - t_d, 0.0)
        u = rng.random(n)
        t_l = np.inf if self.t_l is None else np.asarray(self.t_l, dtype=float)
        t = np.where(self.kind == 0, room,
                     np.where(self.kind == 1, u * room, np.minimum(t_l, room)))
        return np.broadcast_to(t, (n,)).astype(float)


def make_policy(name: str, **kw) -> FollowerPolicy:
    table = {c.name: c for c in (MaxSpeed, AlwaysBrake, RandomAdmissible, ScriptedHuman)}
    if name not in table:
        raise ConfigError(f"unknown policy {name!r}; expected one of {sorted(table)}")
    return table[name](**kw)


def make_lead(name: str, **kw) -> LeadStrategy:
    table = {c.name: c for c in (ConstantLead, FullBrakeLead, BangBangLead, RandomLead)}
    if name not in table:
        raise ConfigError(f"unknown lead strategy {name!r}; expected one of {sorted(table)}")
    return table[name](**kw)
