"""Cycle-accurate execution of the CACC hybrid program.

One cycle is ``ctrl_f; dyn_t; ctrl_l; dyn_td``:

* ``ctrl_f``  the follower picks ``a_f`` from the admissible set; driving
  after a delivered packet resets the staleness clock ``t_f`` to ``tau``;
* ``dyn_t``   both vehicles move for ``t``;
* ``ctrl_l``  the lead's velocity goes on the channel (delivered or lost),
  then the lead picks a new ``a_l >= -B``;
* ``dyn_td``  both vehicles move for the in-flight time ``t_d``.

The engine advances ``n`` independent runs in lock step, one array entry per
run, so a single run is simply ``n = 1``.  Optional ghost trajectories bound
the follower from above and the lead from below over each cycle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable

import numpy as np

from .envelope import (
    AccelSet,
    Params,
    WorldState,
    admissible_accel_set,
    check_initial,
    check_params,
    initial_violations,
    params_violations,
)
from .errors import AdversaryContractError, DomainError, EnvelopeViolation, ScenarioError
from .kinematics import GhostState, evolve, ghost_trajectory, stop_time
from .network import Channel, ChannelOutcome
from .strategies import FollowerPolicy, LeadStrategy, TimingLaw

log = logging.getLogger(__name__)

__all__ = [
    "ControlMode",
    "ModeChoice",
    "CycleTiming",
    "Segment",
    "GhostCycle",
    "CycleRecord",
    "Trace",
    "SimConfig",
    "Simulation",
    "select_mode",
    "lead_step",
    "run_cycle",
    "simulate",
    "run_scenario",
    "EVENTS",
]

EVENTS = ("ctrl_f", "dyn_t", "ctrl_l", "dyn_td")
_TIME_SLACK = 1e-12


class ControlMode(IntEnum):
    DRIVE_DELAY = 0
    DRIVE_DROP = 1
    STOPPED = 2
    BRAKE = 3

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class ModeChoice:
    mode: ControlMode | np.ndarray
    a_f: float | np.ndarray


@dataclass(frozen=True)
class CycleTiming:
    t: float
    t_d: float

    def violations(self, p: Params) -> list[str]:
        t, t_d = np.asarray(self.t), np.asarray(self.t_d)
        slack = _TIME_SLACK * np.maximum(1.0, np.asarray(p.eps))
        checks = [("t >= 0", t >= 0), ("t_d >= 0", t_d >= 0),
                  ("t <= eps", t <= np.asarray(p.eps) + slack),
                  ("t_d <= tau", t_d <= np.asarray(p.tau) + slack),
                  ("t + t_d <= eps", t + t_d <= np.asarray(p.eps) + slack)]
        return [name for name, ok in checks if not np.all(ok)]


@dataclass(frozen=True)
class Segment:
    """One continuous-flow piece: start state, constant accelerations, duration."""

    phase: str
    offset: np.ndarray  # time since cycle start
    duration: np.ndarray
    start: WorldState
    ghost: GhostState | None = None

    def end(self) -> WorldState:
        return flow(self.start, self.duration)


@dataclass(frozen=True)
class GhostCycle:
    snapshot: WorldState  # world at the cycle start (ghost initialisation)
    a_gf: np.ndarray
    a_gl: np.ndarray
    lead_stop: np.ndarray  # time since cycle start the lead ghost stops; inf if not
    end: GhostState


@dataclass(frozen=True)
class CycleRecord:
    index: int
    t0: np.ndarray
    pre: WorldState
    mode: np.ndarray
    timing: CycleTiming
    dropped: np.ndarray
    v_sample: np.ndarray
    segments: tuple[Segment, Segment]
    post: WorldState
    active: np.ndarray
    ghosts: GhostCycle | None = None
    events: tuple[str, ...] = EVENTS

    def outcome(self, run: int = 0) -> ChannelOutcome:
        if bool(np.atleast_1d(self.dropped)[run]):
            return ChannelOutcome(True)
        return ChannelOutcome(False, float(np.atleast_1d(self.v_sample)[run]),
                              float(np.atleast_1d(self.timing.t_d)[run]))


@dataclass
class Trace:
    params: Params
    initial: WorldState
    records: list[CycleRecord] = field(default_factory=list)
    ghosts: bool = False
    seed: int | None = None
    aborted: np.ndarray | None = None
    abort_cycle: np.ndarray | None = None

    @property
    def n_runs(self) -> int:
        return int(np.size(self.initial.v_f))

    @property
    def final(self) -> WorldState:
        return self.records[-1].post if self.records else self.initial

    def __len__(self) -> int:
        return len(self.records)

    def select(self, i: int) -> "Trace":
        """The single run ``i`` of a multi-run trace (fields as length-1 arrays)."""
        sl = np.array([i])
        recs = [_take_record(r, sl) for r in self.records if np.atleast_1d(r.active)[i]]
        return Trace(self.params.take(sl), self.initial.take(sl), recs, self.ghosts, self.seed,
                     None if self.aborted is None else self.aborted[sl],
                     None if self.abort_cycle is None else self.abort_cycle[sl])


def _take_ghost(g: GhostState | None, sl):
    if g is None:
        return None
    return GhostState(*(np.asarray(getattr(g, f))[sl] if np.ndim(getattr(g, f)) else
                        getattr(g, f) for f in ("x_gf", "v_gf", "a_gf", "x_gl", "v_gl", "a_gl")))


def _take(a, sl):
    a = np.asarray(a)
    return a[sl] if a.ndim else a


def _take_record(r: CycleRecord, sl) -> CycleRecord:
    segs = tuple(Segment(s.phase, _take(s.offset, sl), _take(s.duration, sl),
                         s.start.take(sl), _take_ghost(s.ghost, sl)) for s in r.segments)
    g = None
    if r.ghosts is not None:
        g = GhostCycle(r.ghosts.snapshot.take(sl), _take(r.ghosts.a_gf, sl),
                       _take(r.ghosts.a_gl, sl), _take(r.ghosts.lead_stop, sl),
                       _take_ghost(r.ghosts.end, sl))
    return CycleRecord(r.index, _take(r.t0, sl), r.pre.take(sl), _take(r.mode, sl),
                       CycleTiming(_take(r.timing.t, sl), _take(r.timing.t_d, sl)),
                       _take(r.dropped, sl), _take(r.v_sample, sl), segs,
                       r.post.take(sl), _take(r.active, sl), g, r.events)


def flow(w: WorldState, dt) -> WorldState:
    """Continuous evolution of both vehicles and the staleness clock."""
    x_f, v_f, _, _ = evolve(w.x_f, w.v_f, w.a_f, dt)
    x_l, v_l, _, _ = evolve(w.x_l, w.v_l, w.a_l, dt)
    return WorldState(x_f, v_f, w.a_f, x_l, v_l, w.a_l, w.v_ld, w.pkgdrop,
                      np.asarray(w.t_f) + dt)


def _label(a_f, w: WorldState, p: Params, allowed: AccelSet):
    a_f = np.asarray(a_f)
    brake = (a_f >= -np.asarray(p.B)) & (a_f <= -np.asarray(p.b))
    stopped = (a_f == 0.0) & (np.asarray(w.v_f) == 0.0) & ~np.asarray(allowed.drive)
    drive = np.where(np.asarray(w.pkgdrop) == 0, ControlMode.DRIVE_DELAY,
                     ControlMode.DRIVE_DROP)
    return np.where(brake, ControlMode.BRAKE,
                    np.where(stopped, ControlMode.STOPPED, drive)).astype(np.int8)


def _ctrl_f(w: WorldState, p: Params, policy: FollowerPolicy, rng, now,
            margin_scale, on_violation, active):
    allowed = admissible_accel_set(w, p, margin_scale)
    a_f = np.asarray(policy(w, p, allowed, rng, now), dtype=float)
    bad = np.asarray(active) & ~np.asarray(allowed.contains(a_f))
    if bad.any():
        runs = np.flatnonzero(np.atleast_1d(bad))
        if on_violation == "clamp":
            a_f = np.where(bad, allowed.clamp(a_f), a_f)
            bad = np.zeros_like(bad)
        elif on_violation == "raise":
            i = runs[0]
            raise EnvelopeViolation(
                f"policy {policy.name!r} chose a_f={np.atleast_1d(a_f)[i]:.6g} outside the "
                f"admissible set (drive={bool(np.atleast_1d(allowed.drive)[i])}, "
                f"v_f={np.atleast_1d(w.v_f)[i]:.6g}) in run(s) {runs.tolist()}", runs)
    mode = _label(a_f, w, p, allowed)
    t_f = np.where(np.asarray(active) & (mode == ControlMode.DRIVE_DELAY),
                   np.asarray(p.tau, dtype=float), w.t_f)
    return mode, w.replace(a_f=a_f, t_f=t_f), bad


def select_mode(w: WorldState, p: Params, policy: FollowerPolicy,
                rng: np.random.Generator | None = None, now=0.0, *,
                margin_scale=1.0, on_violation="raise"):
    """Run ``ctrl_f``: returns the labelled choice and the post-control state.

    Raises :class:`EnvelopeViolation` when the policy leaves the admissible
    set (``on_violation="clamp"`` projects onto it instead).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    scalar = np.ndim(w.v_f) == 0
    wa = w.as_arrays()
    mode, post, _ = _ctrl_f(wa, p, policy, rng, now, margin_scale,
                            "raise" if on_violation == "abort" else on_violation,
                            np.ones(np.size(wa.v_f), dtype=bool))
    if scalar:
        return ModeChoice(ControlMode(int(mode[0])), float(post.a_f[0])), post.take(0)
    return ModeChoice(mode, post.a_f), post


def _check_lead(a_l, p: Params, a_l_max, active):
    a_l = np.asarray(a_l)
    bad = np.asarray(active) & ((a_l < -np.asarray(p.B)) | (a_l > np.asarray(a_l_max)))
    if bad.any():
        i = int(np.flatnonzero(np.atleast_1d(bad))[0])
        raise AdversaryContractError(
            f"lead chose a_l={np.atleast_1d(a_l)[i]:.6g} outside [-B, a_max] in run {i}")


def lead_step(v_l, strat: LeadStrategy, chan: Channel, rng: np.random.Generator,
              p: Params, a_l_max=5.0, *, delay=None, cycle=0):
    """Run ``ctrl_l`` for the current lead speed ``v_l``.

    The channel is sampled first (the lead transmits before changing its
    acceleration), then the strategy draws ``a_l``.  Returns
    ``(a_l, dropped, v_sample, delay)``.
    """
    n = np.size(v_l)
    if delay is None:
        delay = chan.draw_delay(rng, n, cycle)
    dropped = chan.draw_drop(rng, n, cycle)
    a_l = strat(v_l, p, a_l_max, rng)
    _check_lead(a_l, p, a_l_max, np.ones(n, dtype=bool))
    return a_l, dropped, np.asarray(v_l, dtype=float), np.asarray(delay, dtype=float)


@dataclass
class SimConfig:
    params: Params
    policy: FollowerPolicy
    lead: LeadStrategy
    channel: Channel
    timing: TimingLaw = field(default_factory=TimingLaw)
    a_l_max: float = 5.0
    ghosts: bool = False
    margin_scale: float = 1.0
    on_violation: str = "raise"  # raise | abort | clamp


def _ghost_accel(mode, p: Params):
    A, b = np.asarray(p.A, dtype=float), np.asarray(p.b, dtype=float)
    drive = (mode == ControlMode.DRIVE_DELAY) | (mode == ControlMode.DRIVE_DROP)
    return np.where(drive, A, np.where(mode == ControlMode.BRAKE, -b, 0.0))


def _cycle(cfg: SimConfig, pre: WorldState, t, t_d, rng, *, index, t0, active,
           policy_now):
    p = cfg.params
    events = []
    mode, s0, bad = _ctrl_f(pre, p, cfg.policy, rng, policy_now, cfg.margin_scale,
                            cfg.on_violation, active)
    events.append("ctrl_f")
    if bad.any():
        active = active & ~bad
        t = np.where(active, t, 0.0)
        t_d = np.where(active, t_d, 0.0)
    s1 = flow(s0, t)
    events.append("dyn_t")
    dropped = cfg.channel.draw_drop(rng, np.size(pre.v_f), index)
    a_l = cfg.lead(s1.v_l, p, cfg.a_l_max, rng)
    _check_lead(a_l, p, cfg.a_l_max, active)
    v_sample = np.asarray(s1.v_l, dtype=float)
    s1c = s1.replace(a_l=np.asarray(a_l, dtype=float),
                     pkgdrop=np.where(dropped, 1, 0),
                     v_ld=np.where(dropped, s1.v_ld, v_sample))
    events.append("ctrl_l")
    s2 = flow(s1c, t_d)
    events.append("dyn_td")
    post = s2.where(active, pre)

    gh = None
    g_starts = (None, None)
    if cfg.ghosts:
        a_gf = _ghost_accel(mode, p)
        a_gl = -np.broadcast_to(np.asarray(p.B, dtype=float), np.shape(a_gf)).copy()
        g0 = GhostState(pre.x_f, pre.v_f, a_gf, pre.x_l, pre.v_l, a_gl)
        g1 = ghost_trajectory(g0, t)
        g2 = ghost_trajectory(g1, t_d)
        ts = np.asarray(stop_time(pre.v_l, a_gl))
        lead_stop = np.where(ts <= t + t_d, ts, np.inf)
        gh = GhostCycle(pre, a_gf, a_gl, lead_stop, g2)
        g_starts = (g0, g1)
    segs = (Segment("dyn_t", np.zeros_like(t), t, s0, g_starts[0]),
            Segment("dyn_td", t, t_d, s1c, g_starts[1]))
    rec = CycleRecord(index, t0, pre, mode, CycleTiming(t, t_d), np.asarray(dropped),
                      v_sample, segs, post, active, gh, tuple(events))
    return post, rec, bad


def run_cycle(w: WorldState, timing: CycleTiming, policy: FollowerPolicy,
              strat: LeadStrategy, chan: Channel, rng: np.random.Generator,
              ghosts: bool = False, *, params: Params, a_l_max=5.0, margin_scale=1.0,
              on_violation="raise", index=0, t0=0.0):
    """Execute one full cycle with the given durations.

    Returns ``(next_state, ghost_end_or_None, record)``.
    """
    bad = timing.violations(params)
    if bad:
        raise DomainError(f"cycle timing violates {', '.join(bad)}")
    wa = w.as_arrays()
    n = np.size(wa.v_f)
    cfg = SimConfig(params, policy, strat, chan, a_l_max=a_l_max, ghosts=ghosts,
                    margin_scale=margin_scale, on_violation=on_violation)
    t = np.broadcast_to(np.asarray(timing.t, dtype=float), (n,)).copy()
    t_d = np.broadcast_to(np.asarray(timing.t_d, dtype=float), (n,)).copy()
    post, rec, _ = _cycle(cfg, wa, t, t_d, rng, index=index,
                          t0=np.full(n, float(t0)), active=np.ones(n, dtype=bool),
                          policy_now=np.full(n, float(t0)))
    if np.ndim(w.v_f) == 0:
        post = post.take(0)
    return post, (rec.ghosts.end if rec.ghosts is not None else None), rec


class Simulation:
    """Lock-stepped runs of one configuration.

    ``cycles`` is an int or a per-run array; runs past their cycle count, or
    aborted for an envelope violation, are frozen.  Records are kept when
    ``record`` is true and are always passed to every observer's
    ``observe(record)``.
    """

    def __init__(self, config: SimConfig, initial: WorldState, cycles,
                 rng: np.random.Generator | int | None = 0, *, record: bool = True,
                 observers: Iterable = ()):
        self.config = config
        self.state = initial.as_arrays()
        self.n = int(np.size(self.state.v_f))
        self.cycles = np.broadcast_to(np.asarray(cycles), (self.n,)).copy()
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.record = record
        self.observers = list(observers)
        self.time = np.zeros(self.n)
        self.index = 0
        self.aborted = np.zeros(self.n, dtype=bool)
        self.abort_cycle = np.full(self.n, -1)
        self.trace = Trace(config.params, self.state, [], config.ghosts,
                           aborted=self.aborted, abort_cycle=self.abort_cycle)

    @property
    def done(self) -> bool:
        return self.index >= int(self.cycles.max(initial=0))

    def step(self) -> CycleRecord:
        cfg, p, k = self.config, self.config.params, self.index
        active = (k < self.cycles) & ~self.aborted
        t_d = cfg.channel.draw_delay(self.rng, self.n, k)
        t = cfg.timing.sample(self.rng, t_d, p.eps, self.n)
        t = np.where(active, t, 0.0)
        t_d = np.where(active, t_d, 0.0)
        post, rec, bad = _cycle(cfg, self.state, t, t_d, self.rng, index=k,
                                t0=self.time.copy(), active=active, policy_now=self.time)
        if bad.any():
            self.aborted |= bad
            self.abort_cycle[bad] = k
            log.warning("envelope violation: aborted run(s) %s at cycle %d",
                        np.flatnonzero(bad).tolist(), k)
        self.state = post
        self.time = self.time + rec.timing.t + rec.timing.t_d
        self.index += 1
        if self.record:
            self.trace.records.append(rec)
        for obs in self.observers:
            obs.observe(rec)
        return rec

    def run(self) -> Trace:
        while not self.done:
            self.step()
        return self.trace


def simulate(config: SimConfig, initial: WorldState, cycles, seed=0, **kw) -> Trace:
    trace = Simulation(config, initial, cycles, seed, **kw).run()
    trace.seed = seed if isinstance(seed, int) else None
    return trace


def run_scenario(scenario) -> Trace:
    """Validate and run a scenario (see :mod:`cacc_envelope.scenario`).

    Raises :class:`ScenarioError` naming the first violated precondition.
    """
    p = scenario.params
    bad = params_violations(p)
    if bad:
        raise ScenarioError(f"params violate {bad[0]}", conjunct=bad[0])
    if not check_params(p):
        raise ScenarioError("params invalid")
    from .network import timing_violations

    bad = timing_violations(scenario.timing, p)
    if bad:
        raise ScenarioError(f"network timing violates {bad[0]}", conjunct=bad[0])
    if not check_initial(scenario.initial, p):
        bad = initial_violations(scenario.initial, p)
        raise ScenarioError(f"initial state violates {bad[0]}", conjunct=bad[0])
    return simulate(scenario.build_config(), scenario.initial, scenario.cycles,
                    scenario.seed)
