"""Runtime verification of executor traces.

Three monitors consume :class:`~cacc_envelope.executor.CycleRecord` objects
one at a time, either online from a running simulation or replayed from a
stored trace:

* :class:`SafetyMonitor` - the gap stays positive in continuous time;
* :class:`CycleInvariantMonitor` - the loop invariant holds at every cycle
  boundary;
* :class:`DiffInvariantMonitor` - along every flow segment the ghost
  dominance, closed-form ghost solutions, clock and staleness bounds hold,
  and the ghost-gap predicates agree with their cycle-start forms.

All monitors track every run of a lock-stepped batch independently.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envelope import Params, WorldState, check_loop_invariant, loop_violations
from .errors import TraceError
from .executor import CycleRecord, Trace, flow
from .kinematics import evolve, first_contact_time, segment_min_gap, stop_time

__all__ = [
    "Violation",
    "Verdict",
    "SafetyMonitor",
    "CycleInvariantMonitor",
    "DiffInvariantMonitor",
    "validate_trace",
    "check_trace_safety",
    "check_cycle_invariants",
    "check_diff_invariants",
    "monitor_trace",
]

ABS_TOL = 1e-9
REL_TOL = 1e-12


def _tol(*mags):
    m = 0.0
    for q in mags:
        m = np.maximum(m, np.abs(q))
    return ABS_TOL + REL_TOL * m


@dataclass(frozen=True)
class Violation:
    cycle: int
    phase: str
    time: float
    conjunct: str
    witness: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Verdict:
    property: str
    passed: bool
    violation: Violation | None = None
    applicable: bool = True
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "n/a" if not self.applicable else ("PASS" if self.passed else "FAIL")
        msg = f"{self.property}: {status}"
        if self.violation is not None:
            v = self.violation
            msg += f" (cycle {v.cycle}, {v.phase}, t={v.time:.9f}, {v.conjunct})"
        return msg


class _Monitor:
    prop = "monitor"

    def __init__(self):
        self.n = None

    def _init(self, n):
        self.n = n
        self.first_cycle = np.full(n, -1)
        self.violations: dict[int, Violation] = {}

    @property
    def passed(self) -> np.ndarray:
        return self.first_cycle < 0

    def _flag(self, mask, rec: CycleRecord, phase, conjunct_of, time_of, witness_of,
              cycle=None):
        cycle = rec.index if cycle is None else cycle
        new = np.atleast_1d(mask) & (self.first_cycle < 0)
        for i in np.flatnonzero(new):
            self.first_cycle[i] = cycle
            self.violations[int(i)] = Violation(cycle, phase, float(time_of(i)),
                                                conjunct_of(i), witness_of(i))

    def verdict(self, run: int = 0) -> Verdict:
        if self.n is None:
            return Verdict(self.prop, True)
        return Verdict(self.prop, bool(self.passed[run]), self.violations.get(run))


def _seg_world(start: WorldState, s):
    x_f, v_f, _, _ = evolve(start.x_f, start.v_f, start.a_f, s)
    x_l, v_l, _, _ = evolve(start.x_l, start.v_l, start.a_l, s)
    return x_f, v_f, x_l, v_l


def _at(a, i):
    a = np.asarray(a)
    return a[i] if a.ndim else a


class SafetyMonitor(_Monitor):
    """Continuous-time check of ``x_l - x_f > 0`` via exact segment minima."""

    prop = "safety"

    def _init(self, n):
        super()._init(n)
        self.min_gap = np.full(n, np.inf)
        self.t_min = np.zeros(n)

    def begin(self, initial: WorldState):
        gap = np.atleast_1d(np.asarray(initial.gap, dtype=float))
        if self.n is None:
            self._init(gap.size)
        better = gap < self.min_gap
        self.min_gap = np.where(better, gap, self.min_gap)

    def observe(self, rec: CycleRecord):
        if self.n is None:
            self._init(np.size(rec.pre.v_f))
        act = np.atleast_1d(rec.active)
        for seg in rec.segments:
            s = seg.start
            g, tm = segment_min_gap(s.x_f, s.v_f, s.a_f, s.x_l, s.v_l, s.a_l, seg.duration)
            g = np.where(act, np.atleast_1d(g), np.inf)
            tm = np.atleast_1d(rec.t0 + seg.offset + tm)
            better = g < self.min_gap
            self.min_gap = np.where(better, g, self.min_gap)
            self.t_min = np.where(better, tm, self.t_min)

            def contact(i, seg=seg, s=s):
                tc = first_contact_time(_at(s.x_f, i), _at(s.v_f, i), _at(s.a_f, i),
                                        _at(s.x_l, i), _at(s.v_l, i), _at(s.a_l, i),
                                        _at(seg.duration, i))
                return _at(rec.t0, i) + _at(seg.offset, i) + (tc if tc is not None else 0.0)

            self._flag(g <= 0.0, rec, seg.phase, lambda i: "x_l - x_f > 0", contact,
                       lambda i, g=g: {"min_gap": float(g[i])})

    def verdict(self, run: int = 0) -> Verdict:
        v = super().verdict(run)
        if self.n is None:
            return v
        return Verdict(v.property, v.passed, v.violation,
                       detail={"min_gap": float(self.min_gap[run]),
                               "t_min": float(self.t_min[run])})


class CycleInvariantMonitor(_Monitor):
    """Loop invariant at every cycle boundary (initial state included)."""

    prop = "cycle_invariants"

    def __init__(self, params: Params, tol: float = ABS_TOL):
        super().__init__()
        self.params = params
        self.tol = tol

    def _check(self, w: WorldState, rec: CycleRecord, act, cycle, time):
        ok = np.atleast_1d(check_loop_invariant(w, self.params, self.tol))
        p = self.params

        def which(i):
            names = loop_violations(w.take(i), p.take(i), self.tol)
            return names[0] if names else "loop invariant"

        self._flag(act & ~ok, rec, "cycle start", which, lambda i: _at(time, i),
                   lambda i: {k: float(v) for k, v in w.take(i).to_dict().items()}, cycle)

    def observe(self, rec: CycleRecord):
        # the end of cycle k is the start of cycle k + 1 (or the final state)
        if self.n is None:
            self._init(np.size(rec.pre.v_f))
        act = np.atleast_1d(rec.active)
        if rec.index == 0:
            self._check(rec.pre, rec, act, 0, rec.t0)
        end = rec.t0 + rec.timing.t + rec.timing.t_d
        self._check(rec.post, rec, act, rec.index + 1, end)


class DiffInvariantMonitor(_Monitor):
    """Differential-invariant conjuncts sampled along each flow segment.

    Each segment is evaluated at its endpoints and ``k`` evenly spaced
    interior points.  Before the lead ghost stops, ``dyn_t`` samples are
    checked against ``D_t,1`` and ``dyn_td`` samples against ``D_td,1``;
    afterwards against ``D_t,2`` / ``D_td,2``, which drop ``v_l >= v_gl`` and
    use the stopped lead-ghost solution.  A braking follower ghost holds at
    rest once stopped, so its closed form is evaluated with time clamped to
    its stop instant.
    """

    prop = "diff_invariants"

    def __init__(self, params: Params, k: int = 8):
        super().__init__()
        self.params = params
        self.k = k
        self.frac = np.linspace(0.0, 1.0, k + 2)[:, None]

    def _init(self, n):
        super()._init(n)
        self.stopped_samples = np.zeros(n, dtype=np.int64)

    def observe(self, rec: CycleRecord):
        if rec.ghosts is None:
            raise TraceError("diff-invariant monitoring needs ghost trajectories")
        if self.n is None:
            self._init(np.size(rec.pre.v_f))
        act = np.atleast_1d(rec.active)
        for seg in rec.segments:
            bad, names, stopped = self._segment(rec, seg)
            self.stopped_samples += np.sum(stopped & act, axis=0)
            fail = act & bad.any(axis=0)
            if not fail.any():
                continue
            first_sample = np.argmax(bad, axis=0)

            def conj(i, names=names, first_sample=first_sample, seg=seg, stopped=stopped):
                j = first_sample[i]
                inv = ("D_t" if seg.phase == "dyn_t" else "D_td") + (
                    ",2" if stopped[j, i] else ",1")
                for name, arr in names:
                    if arr[j, i]:
                        return f"{inv}: {name}"
                return inv

            def when(i, seg=seg, first_sample=first_sample):
                return (_at(rec.t0, i) + _at(seg.offset, i)
                        + self.frac[first_sample[i], 0] * _at(seg.duration, i))

            self._flag(fail, rec, seg.phase, conj, when, lambda i: {})

    def _segment(self, rec: CycleRecord, seg):
        p, gc, g = self.params, rec.ghosts, seg.ghost
        B = np.asarray(p.B, dtype=float)
        b = np.asarray(p.b, dtype=float)
        tau = np.asarray(p.tau, dtype=float)
        s = self.frac * np.asarray(seg.duration)  # (k+2, n)
        T = np.asarray(seg.offset) + s  # time since cycle start
        st = seg.start
        x_f, v_f, x_l, v_l = _seg_world(st, s)
        x_gf, v_gf, _, _ = evolve(g.x_gf, g.v_gf, g.a_gf, s)
        x_gl, v_gl, _, _ = evolve(g.x_gl, g.v_gl, g.a_gl, s)
        t_f = np.asarray(st.t_f) + s
        v_ld = np.asarray(st.v_ld)
        pk = np.asarray(st.pkgdrop)

        snap = gc.snapshot
        x_f0, v_f0 = np.asarray(snap.x_f), np.asarray(snap.v_f)
        x_l0, v_l0 = np.asarray(snap.x_l), np.asarray(snap.v_l)
        a_gf = np.asarray(gc.a_gf)
        stopped = T >= np.asarray(gc.lead_stop)  # lead ghost at rest: D_*,2

        Tf = np.minimum(T, stop_time(v_f0, a_gf))
        disp_f = v_f0 * Tf + 0.5 * a_gf * Tf * Tf
        disp_l = np.where(stopped, v_l0 * v_l0 / (2.0 * B), v_l0 * T - 0.5 * B * T * T)
        xgf_cf = x_f0 + disp_f
        vgf_cf = np.where(Tf < T, 0.0, v_f0 + a_gf * T)
        xgl_cf = x_l0 + disp_l
        vgl_cf = np.where(stopped, 0.0, v_l0 - B * T)

        tx = _tol(x_f, x_l, x_gf, x_gl)
        tv = _tol(v_f, v_l, v_gf, v_gl)
        in_t = seg.phase == "dyn_t"

        if in_t:
            stale_ok = v_ld - B * t_f <= v_l + tv
        else:
            stale_ok = (((pk == 0) & (v_ld - B * s <= v_l + tv))
                        | ((pk == 1) & (v_ld - B * t_f <= v_l + tv)))
        # D_td,2 as printed carries no v_ld >= 0 conjunct
        vld_ok = (v_ld >= 0) | (stopped & (not in_t))

        gap_g = x_gl - x_gf
        rhs1 = (x_l0 - x_f0) - (disp_f - disp_l)
        loop1 = ((gap_g > 0) == (rhs1 > 0)) | (np.abs(gap_g) <= tx) | (np.abs(rhs1) <= tx)
        lhs2 = gap_g - (v_gf * v_gf / (2.0 * b) - v_gl * v_gl / (2.0 * B))
        rhs2 = (x_l0 - x_f0) - (v_f0 * v_f0 / (2.0 * b) - v_l0 * v_l0 / (2.0 * B)
                                + (a_gf / b + 1.0) * disp_f)
        loop2 = ((lhs2 > 0) == (rhs2 > 0)) | (np.abs(lhs2) <= tx) | (np.abs(rhs2) <= tx)

        names = [
            ("clock >= 0", ~(T >= 0)),
            ("t_f >= tau", ~(t_f >= tau - tv)),
            ("v_ld >= 0", ~vld_ok),
            ("v_ld staleness bound", ~stale_ok),
            ("ghost dominance v_f <= v_gf", ~(v_f <= v_gf + tv)),
            ("ghost dominance x_f <= x_gf", ~(x_f <= x_gf + tx)),
            ("ghost dominance x_l >= x_gl", ~(x_l >= x_gl - tx)),
            ("ghost dominance v_l >= v_gl", ~(stopped | (v_l >= v_gl - tv))),
            ("follower ghost solution", ~((np.abs(x_gf - xgf_cf) <= tx)
                                          & (np.abs(v_gf - vgf_cf) <= tv))),
            ("lead ghost solution", ~((np.abs(x_gl - xgl_cf) <= tx)
                                      & (np.abs(v_gl - vgl_cf) <= tv))),
            ("ghost gap equivalence (positive gap)", ~loop1),
            ("ghost gap equivalence (braking bound)", ~loop2),
            ("ghost soundness", (gap_g > tx) & ~(x_l - x_f > 0)),
        ]
        bad = np.zeros(np.shape(T), dtype=bool)
        for _, arr in names:
            bad |= arr
        return bad, names, np.broadcast_to(stopped, bad.shape)

    def verdict(self, run: int = 0) -> Verdict:
        v = super().verdict(run)
        if self.n is None:
            return v
        return Verdict(v.property, v.passed, v.violation,
                       detail={"stopped_lead_samples": int(self.stopped_samples[run])})


def validate_trace(trace: Trace, tol: float = 1e-9) -> None:
    """Raise :class:`TraceError` unless segments chain and durations are legal."""
    prev = trace.initial
    for rec in trace.records:
        bad = rec.timing.violations(trace.params)
        if bad:
            raise TraceError(f"cycle {rec.index}: timing violates {', '.join(bad)}")
        if rec.events != ("ctrl_f", "dyn_t", "ctrl_l", "dyn_td"):
            raise TraceError(f"cycle {rec.index}: event order {rec.events}")
        _same(prev, rec.pre, tol, f"cycle {rec.index} start")
        s0, s1 = rec.segments
        for name in ("x_f", "v_f", "x_l", "v_l"):
            _close(getattr(prev, name), getattr(s0.start, name), tol,
                   f"cycle {rec.index} dyn_t start {name}")
        end0 = flow(s0.start, s0.duration)
        for name in ("x_f", "v_f", "x_l", "v_l", "t_f"):
            _close(getattr(end0, name), getattr(s1.start, name), tol,
                   f"cycle {rec.index} dyn_td start {name}")
        end1 = flow(s1.start, s1.duration)
        act = np.asarray(rec.active)
        for name in ("x_f", "v_f", "x_l", "v_l"):
            _close(np.where(act, getattr(end1, name), getattr(rec.pre, name)),
                   getattr(rec.post, name), tol, f"cycle {rec.index} end {name}")
        prev = rec.post


def _close(a, b, tol, where):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if not np.all(np.abs(a - b) <= tol + REL_TOL * np.maximum(np.abs(a), np.abs(b))):
        raise TraceError(f"discontinuity at {where}: {a} vs {b}")


def _same(a: WorldState, b: WorldState, tol, where):
    for name in ("x_f", "v_f", "x_l", "v_l", "a_l", "v_ld", "t_f"):
        _close(getattr(a, name), getattr(b, name), tol, f"{where} {name}")


def _replay(trace: Trace, mon):
    for rec in trace.records:
        mon.observe(rec)
    return mon


def check_trace_safety(trace: Trace, run: int = 0) -> Verdict:
    validate_trace(trace)
    mon = SafetyMonitor()
    mon.begin(trace.initial)
    _replay(trace, mon)
    v = mon.verdict(run)
    if v.passed and mon.min_gap[run] <= 0:
        # zero-cycle trace starting at or past contact
        return Verdict(v.property, False, Violation(-1, "initial", 0.0, "x_l - x_f > 0"),
                       detail=v.detail)
    return v


def check_cycle_invariants(trace: Trace, params: Params | None = None, run: int = 0) -> Verdict:
    validate_trace(trace)
    p = params if params is not None else trace.params
    if not trace.records:
        ok = bool(np.atleast_1d(check_loop_invariant(trace.initial, p, ABS_TOL))[run])
        viol = None if ok else Violation(
            -1, "initial", 0.0, loop_violations(trace.initial.take(run), p, ABS_TOL)[0])
        return Verdict(CycleInvariantMonitor.prop, ok, viol)
    return _replay(trace, CycleInvariantMonitor(p)).verdict(run)


def check_diff_invariants(trace: Trace, params: Params | None = None, k: int = 8,
                          run: int = 0) -> Verdict:
    if not trace.ghosts or any(r.ghosts is None for r in trace.records):
        return Verdict(DiffInvariantMonitor.prop, False, applicable=False)
    validate_trace(trace)
    p = params if params is not None else trace.params
    return _replay(trace, DiffInvariantMonitor(p, k)).verdict(run)


def monitor_trace(trace: Trace, k: int = 8, run: int = 0) -> list[Verdict]:
    """All applicable verdicts for one run of a trace."""
    out = [check_trace_safety(trace, run), check_cycle_invariants(trace, run=run)]
    if trace.ghosts:
        out.append(check_diff_invariants(trace, k=k, run=run))
    return out
