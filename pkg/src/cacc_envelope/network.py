"""Lossy, delayed lead-to-follower broadcast channel.

The channel never holds more than one packet in flight: the lead transmits
once per cycle and the in-flight time is the ``dyn_td`` segment of that
cycle.  Randomness comes from a caller-owned ``numpy.random.Generator``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .envelope import Params, WorldState, check_params
from .errors import ConfigError

__all__ = [
    "NetworkTiming",
    "ChannelOutcome",
    "Delivered",
    "Dropped",
    "validate_timing",
    "timing_violations",
    "DelayLaw",
    "PointDelay",
    "UniformDelay",
    "TruncExpDelay",
    "DelayMixture",
    "make_delay_law",
    "Channel",
    "sample_channel",
    "apply_outcome",
]


@dataclass(frozen=True)
class NetworkTiming:
    """Lead transmit period, radar delay and follower compute time (s)."""

    t_l: float
    t_dx: float = 0.0
    t_fcomp: float = 0.0


def _timing_conjuncts(nt: NetworkTiming, p: Params):
    tau = p.tau
    return [
        ("t_dx >= 0", nt.t_dx >= 0),
        ("t_fcomp >= 0", nt.t_fcomp >= 0),
        ("t_dx + t_fcomp <= t_l", nt.t_dx + nt.t_fcomp <= nt.t_l),
        ("t_l <= eps - tau", nt.t_l <= p.eps - tau),
        ("t_dx <= tau", nt.t_dx <= tau),
    ]


def validate_timing(nt: NetworkTiming, p: Params) -> bool:
    return bool(check_params(p)) and all(bool(c) for _, c in _timing_conjuncts(nt, p))


def timing_violations(nt: NetworkTiming, p: Params) -> list[str]:
    return [name for name, c in _timing_conjuncts(nt, p) if not bool(c)]


@dataclass(frozen=True)
class ChannelOutcome:
    """Fate of one lead packet.  ``v_sample``/``delay`` are unset when dropped."""

    dropped: bool
    v_sample: float = float("nan")
    delay: float = float("nan")

    @property
    def kind(self) -> str:
        return "dropped" if self.dropped else "delivered"


def Delivered(v_sample: float, delay: float) -> ChannelOutcome:
    return ChannelOutcome(False, float(v_sample), float(delay))


def Dropped() -> ChannelOutcome:
    return ChannelOutcome(True)


class DelayLaw:
    """Distribution of the in-flight delay, supported on ``[0, tau]``."""

    name = "delay"

    def upper(self, tau):
        return tau

    def check(self, tau) -> None:
        if np.any(np.asarray(self.upper(tau)) > np.asarray(tau)):
            raise ConfigError(f"{self.name} delay law exceeds tau={tau}")

    def sample(self, rng: np.random.Generator, tau, n: int) -> np.ndarray:
        raise NotImplementedError


class PointDelay(DelayLaw):
    """Every packet takes exactly ``value`` (default: ``tau``)."""

    name = "point"

    def __init__(self, value=None):
        self.value = value

    def upper(self, tau):
        return tau if self.value is None else self.value

    def sample(self, rng, tau, n):
        return np.broadcast_to(np.asarray(self.upper(tau), dtype=float), (n,)).copy()


class UniformDelay(DelayLaw):
    name = "uniform"

    def sample(self, rng, tau, n):
        return rng.random(n) * np.asarray(tau, dtype=float)


class TruncExpDelay(DelayLaw):
    """Exponential with mean ``mean * tau`` conditioned on ``[0, tau]``."""

    name = "truncexp"

    def __init__(self, mean_fraction: float = 0.3):
        if mean_fraction <= 0:
            raise ConfigError("truncexp mean_fraction must be positive")
        self.mean_fraction = mean_fraction

    def sample(self, rng, tau, n):
        tau = np.asarray(tau, dtype=float)
        u = rng.random(n)
        scale = self.mean_fraction * tau
        with np.errstate(divide="ignore", invalid="ignore"):
            d = -scale * np.log1p(-u * -np.expm1(-tau / scale))
        return np.where(tau > 0, np.minimum(np.nan_to_num(d), tau), 0.0)


class DelayMixture(DelayLaw):
    """Per-run choice among several laws; ``index[i]`` picks run ``i``'s law."""

    name = "mixture"

    def __init__(self, laws: Sequence[DelayLaw], index):
        self.laws = list(laws)
        self.index = np.asarray(index)

    def check(self, tau):
        for law in self.laws:
            law.check(tau)

    def sample(self, rng, tau, n):
        draws = np.stack([law.sample(rng, tau, n) for law in self.laws])
        return np.take_along_axis(draws, self.index[None, :], axis=0)[0]


def make_delay_law(name: str, **kw) -> DelayLaw:
    laws = {"point": PointDelay, "uniform": UniformDelay, "truncexp": TruncExpDelay}
    try:
        return laws[name](**kw)
    except KeyError:
        raise ConfigError(f"unknown delay law {name!r}; expected one of {sorted(laws)}")


class Channel:
    """Packet channel for one simulation (or one batch of lock-stepped runs).

    Either random (``drop_prob`` plus a delay law) or adversarial: a
    ``schedule`` of outcomes consumed one per cycle, the last entry repeating.
    Schedule entries are ``None`` for a drop or a delay in seconds.
    """

    def __init__(self, tau, drop_prob=0.0, delay_law: DelayLaw | None = None,
                 schedule: Sequence[float | None] | None = None):
        dp = np.asarray(drop_prob, dtype=float)
        if np.any((dp < 0) | (dp > 1)):
            raise ConfigError("drop_prob must lie in [0, 1]")
        self.tau = tau
        self.drop_prob = drop_prob
        self.delay_law = delay_law if delay_law is not None else PointDelay()
        self.delay_law.check(tau)
        self.schedule = list(schedule) if schedule else None
        if self.schedule is not None:
            for d in self.schedule:
                if d is not None and not (0 <= d <= np.min(tau)):
                    raise ConfigError(f"scheduled delay {d} outside [0, tau]")

    def _entry(self, cycle: int):
        return self.schedule[min(cycle, len(self.schedule) - 1)]

    def draw_delay(self, rng: np.random.Generator, n: int, cycle: int = 0) -> np.ndarray:
        """In-flight time of this cycle's packet, drawn before the cycle runs."""
        if self.schedule is not None:
            d = self._entry(cycle)
            # dropped packets still occupy a full delay slot of the cycle
            return np.broadcast_to(np.asarray(self.tau if d is None else d, dtype=float),
                                   (n,)).copy()
        return self.delay_law.sample(rng, self.tau, n)

    def draw_drop(self, rng: np.random.Generator, n: int, cycle: int = 0) -> np.ndarray:
        if self.schedule is not None:
            return np.full(n, self._entry(cycle) is None)
        return rng.random(n) < np.asarray(self.drop_prob)


def sample_channel(v_l: float, drop_prob: float, delay_law: DelayLaw,
                   rng: np.random.Generator, tau: float) -> ChannelOutcome:
    """One packet: dropped with probability ``drop_prob``, else delivered."""
    ch = Channel(tau, drop_prob, delay_law)
    if ch.draw_drop(rng, 1)[0]:
        return Dropped()
    return Delivered(v_l, float(ch.draw_delay(rng, 1)[0]))


def apply_outcome(w: WorldState, o: ChannelOutcome) -> WorldState:
    """Receipt overwrites ``v_ld`` and clears ``pkgdrop``; a loss only sets it.

    The staleness clock is untouched here: it is reset to ``tau`` by the
    follower's drive-under-delay mode at its next control instant.
    """
    if o.dropped:
        return w.replace(pkgdrop=1)
    return w.replace(pkgdrop=0, v_ld=o.v_sample)
