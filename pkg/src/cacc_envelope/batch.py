"""Seeded batch execution with online monitoring.

Runs are advanced in lock-stepped chunks (one numpy array entry per run)
and checked by the monitors as each cycle is produced, so no trace is kept.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .envelope import Params, WorldState, check_initial
from .executor import SimConfig, Simulation
from .monitor import CycleInvariantMonitor, DiffInvariantMonitor, SafetyMonitor
from .network import Channel, DelayMixture, PointDelay, TruncExpDelay, UniformDelay
from .strategies import (
    BangBangLead,
    ConstantLead,
    FullBrakeLead,
    LeadMixture,
    MaxSpeed,
    PolicyMixture,
    RandomAdmissible,
    RandomLead,
    ScriptedHuman,
    TimingLaw,
)

log = logging.getLogger(__name__)

__all__ = ["BatchSummary", "run_batch", "random_params", "random_initial", "random_suite"]

PROPERTIES = ("safety", "cycle_invariants", "diff_invariants")


@dataclass
class BatchSummary:
    runs: int
    min_gap: np.ndarray
    failed: dict  # property -> bool array over runs
    aborted: np.ndarray
    abort_cycle: np.ndarray
    wall_time: float
    first_violations: dict = field(default_factory=dict)  # property -> list[(run, Violation)]
    conjunct_counts: dict = field(default_factory=dict)  # diff-invariant conjunct -> runs

    def violations(self, prop: str) -> int:
        return int(np.sum(self.failed[prop])) if prop in self.failed else 0

    @property
    def ok(self) -> bool:
        return not any(np.any(v) for v in self.failed.values()) and not self.aborted.any()

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1

    def table(self) -> str:
        rows = [("runs", str(self.runs)),
                ("min_gap_min", "%.9f" % float(np.min(self.min_gap))),
                ("min_gap_median", "%.9f" % float(np.median(self.min_gap)))]
        for prop in PROPERTIES:
            if prop in self.failed:
                rows.append((f"violations_{prop}", str(self.violations(prop))))
            else:
                rows.append((f"violations_{prop}", "n/a"))
        rows.append(("envelope_aborts", str(int(self.aborted.sum()))))
        rows.append(("wall_time_s", "%.3f" % self.wall_time))
        width = max(len(k) for k, _ in rows)
        out = [f"{k:<{width}}  {v}" for k, v in rows]
        for i in np.flatnonzero(self.aborted)[:20]:
            out.append(f"abort run={i} cycle={self.abort_cycle[i]}")
        for prop, lst in self.first_violations.items():
            for run, v in lst[:5]:
                out.append(f"violation {prop} run={run} cycle={v.cycle} phase={v.phase} "
                           f"t={v.time:.9f} {v.conjunct}")
        return "\n".join(out)


def _merge(acc: dict, part: dict):
    for k, v in part.items():
        acc.setdefault(k, []).append(v)


def _run_chunk(cfg: SimConfig, w: WorldState, cycles, rng, k: int):
    mons = [SafetyMonitor(), CycleInvariantMonitor(cfg.params)]
    if cfg.ghosts:
        mons.append(DiffInvariantMonitor(cfg.params, k))
    mons[0].begin(w)
    sim = Simulation(cfg, w, cycles, rng, record=False, observers=mons)
    sim.run()
    failed = {m.prop: ~m.passed if m.n is not None else np.zeros(sim.n, bool) for m in mons}
    first = {m.prop: sorted(m.violations.items()) for m in mons if m.n is not None}
    counts = {}
    if cfg.ghosts and mons[2].n is not None:
        for v in mons[2].violations.values():
            counts[v.conjunct] = counts.get(v.conjunct, 0) + 1
    return mons[0].min_gap, failed, sim.aborted, sim.abort_cycle, first, counts


def _assemble(parts, n, wall, offsets) -> BatchSummary:
    min_gap = np.concatenate([p[0] for p in parts])
    failed = {}
    for prop in PROPERTIES:
        if all(prop in p[1] for p in parts):
            failed[prop] = np.concatenate([p[1][prop] for p in parts])
    aborted = np.concatenate([p[2] for p in parts])
    abort_cycle = np.concatenate([p[3] for p in parts])
    first, counts = {}, {}
    for off, p in zip(offsets, parts):
        for prop, lst in p[4].items():
            first.setdefault(prop, []).extend((off + i, v) for i, v in lst)
        for c, m in p[5].items():
            counts[c] = counts.get(c, 0) + m
    return BatchSummary(n, min_gap, failed, aborted, abort_cycle, wall, first, counts)


def run_batch(scenario, n_runs: int, seed: int | None = None, chunk: int = 10_000,
              ghosts: bool | None = None) -> BatchSummary:
    """Run ``n_runs`` copies of a scenario under independent randomness.

    Every run is checked by the safety and cycle-invariant monitors (plus
    the differential-invariant monitor when ghosts are on).  Runs whose
    policy leaves the admissible set are aborted and counted, never dropped.
    """
    seed = scenario.seed if seed is None else seed
    t0 = time.perf_counter()
    parts, offsets = [], []
    ss = np.random.SeedSequence(seed)
    for ci, start in enumerate(range(0, n_runs, chunk)):
        m = min(chunk, n_runs - start)
        rng = np.random.default_rng(ss.spawn(1)[0])
        cfg = scenario.build_config(rng, m)
        if scenario.on_violation == "raise":
            cfg.on_violation = "abort"
        if ghosts is not None:
            cfg.ghosts = ghosts
        w = scenario.initial.as_arrays(m)
        parts.append(_run_chunk(cfg, w, scenario.cycles, rng, scenario.interior_samples))
        offsets.append(start)
    return _assemble(parts, n_runs, time.perf_counter() - t0, offsets)


def random_params(rng: np.random.Generator, n: int) -> Params:
    A = rng.uniform(0.5, 4.0, n)
    B = rng.uniform(2.0, 10.0, n)
    b = B * rng.uniform(0.2, 1.0, n)
    eps = rng.uniform(0.05, 0.5, n)
    tau = eps * rng.uniform(0.0, 0.9, n)
    return Params(A, B, b, eps, tau)


def random_initial(rng: np.random.Generator, p: Params, n: int, a_l_max=3.0) -> WorldState:
    """States satisfying the initial-state constraint, many close to its boundary."""
    out = None
    todo = np.arange(n)
    while todo.size:
        m = todo.size
        pp = p.take(todo)
        v_f = rng.uniform(0.0, 30.0, m)
        v_l = rng.uniform(0.0, 30.0, m)
        drop = rng.random(m) < 0.2
        v_ld = np.where(drop, 0.0, v_l + rng.random(m) * pp.B * pp.tau)
        v_lo = v_ld - pp.B * pp.tau
        lead = np.where(v_lo >= 0, v_lo * v_lo / (2 * pp.B), 0.0)
        bound = np.maximum(v_f * v_f / (2 * pp.b) - np.where(drop, 0.0, lead), 0.0)
        tight = rng.random(m) < 0.5
        slack = np.where(tight, 10.0 ** rng.uniform(-6, -1, m), rng.uniform(0.0, 50.0, m))
        w = WorldState(np.zeros(m), v_f, 0.0, bound + slack, v_l,
                       rng.uniform(-pp.B, a_l_max), v_ld, drop.astype(np.int64),
                       pp.tau + rng.uniform(0.0, 2.0, m) * pp.eps).as_arrays(m)
        good = np.asarray(check_initial(w, pp), dtype=bool)
        if out is None:
            out = WorldState(*(np.zeros(n, dtype=np.asarray(getattr(w, f)).dtype)
                               for f in w.__dataclass_fields__))
        vals = {f: np.asarray(getattr(out, f)).copy() for f in w.__dataclass_fields__}
        for f in vals:
            vals[f][todo[good]] = np.asarray(getattr(w, f))[good]
        out = WorldState(**vals)
        todo = todo[~good]
    return out


def random_suite_config(rng: np.random.Generator, n: int, max_cycles: int, ghosts=True,
                        a_l_max=3.0):
    """Random parameters, states, policies, leads, channels and timing laws for ``n`` runs."""
    p = random_params(rng, n)
    w = random_initial(rng, p, n, a_l_max)
    horizon = max_cycles * float(np.max(p.eps)) + 1.0
    policy = PolicyMixture([MaxSpeed(V=rng.uniform(5.0, 40.0, n)), RandomAdmissible(),
                            ScriptedHuman.random(rng, n, horizon)],
                           rng.integers(0, 3, n))
    lead = LeadMixture([FullBrakeLead(), BangBangLead(0.2), RandomLead(), ConstantLead(0.0)],
                       rng.integers(0, 4, n), v_max=40.0)
    drop = np.array([0.0, 0.3, 1.0])[rng.integers(0, 3, n)]
    delay = DelayMixture([PointDelay(), UniformDelay(), TruncExpDelay()], rng.integers(0, 3, n))
    chan = Channel(p.tau, drop, delay)
    t_l = (p.eps - p.tau) * rng.uniform(0.5, 1.0, n)
    timing = TimingLaw(rng.integers(0, 3, n), t_l)
    cfg = SimConfig(p, policy, lead, chan, timing, a_l_max=a_l_max, ghosts=ghosts,
                    on_violation="abort")
    return cfg, w


def random_suite(n_runs: int = 100_000, seed: int = 0, chunk: int = 10_000,
                 cycles=(200, 1000), ghosts: bool = True, k: int = 8,
                 progress=None) -> BatchSummary:
    """Randomized passive-safety suite over envelope-respecting policies.

    Cycle counts are drawn per run in ``cycles`` and runs are chunked in
    order of cycle count so lock-stepped chunks waste little time.
    """
    t0 = time.perf_counter()
    ss = np.random.SeedSequence(seed)
    master = np.random.default_rng(ss.spawn(1)[0])
    counts = np.sort(master.integers(cycles[0], cycles[1] + 1, n_runs))
    parts, offsets = [], []
    for ci, start in enumerate(range(0, n_runs, chunk)):
        m = min(chunk, n_runs - start)
        cyc = counts[start:start + m]
        rng = np.random.default_rng(ss.spawn(1)[0])
        cfg, w = random_suite_config(rng, m, int(cyc.max()), ghosts)
        parts.append(_run_chunk(cfg, w, cyc, rng, k))
        offsets.append(start)
        if progress is not None:
            progress(start + m, n_runs, time.perf_counter() - t0)
        log.info("suite chunk %d: %d runs, %d cycles, %.1fs", ci, m, int(cyc.max()),
                 time.perf_counter() - t0)
    return _assemble(parts, n_runs, time.perf_counter() - t0, offsets)
