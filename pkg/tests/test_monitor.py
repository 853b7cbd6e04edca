import dataclasses

import numpy as np
import pytest

from cacc_envelope.envelope import Params, WorldState
from cacc_envelope.errors import TraceError
from cacc_envelope.executor import FollowerPolicy, SimConfig, Simulation, simulate
from cacc_envelope.monitor import (
    SafetyMonitor,
    check_cycle_invariants,
    check_diff_invariants,
    check_trace_safety,
    validate_trace,
)
from cacc_envelope.network import Channel, UniformDelay
from cacc_envelope.oracle import falsify
from cacc_envelope.strategies import (
    AlwaysBrake,
    ConstantLead,
    FullBrakeLead,
    MaxSpeed,
    RandomAdmissible,
    RandomLead,
    TimingLaw,
)
from oracles import dense_min_gap

P = Params(2.0, 4.0, 2.0, 0.2, 0.05)


class Fixed(FollowerPolicy):
    name = "fixed"

    def __init__(self, a):
        self.a = a

    def __call__(self, w, p, allowed, rng, now):
        return np.full(np.size(w.v_f), float(self.a))


def _run(w, policy, lead, cycles, ghosts=True, drop=0.0, **kw):
    cfg = SimConfig(P, policy, lead, Channel(P.tau, drop), ghosts=ghosts, **kw)
    return simulate(cfg, w, cycles, seed=0)


def test_static_trace_passes():
    tr = _run(WorldState(0, 0, 0, 10, 0, 0, 0, 0, P.tau), Fixed(0.0), ConstantLead(0.0), 20)
    v = check_trace_safety(tr)
    assert v.passed and v.violation is None and v.detail["min_gap"] == 10.0
    assert check_cycle_invariants(tr, P).passed
    assert check_diff_invariants(tr, P).passed


def test_contact_time_reported():
    tr = _run(WorldState(0, 5, 0, 1, 0, 0, 0, 0, P.tau), Fixed(-2.0), ConstantLead(0.0), 3)
    v = check_trace_safety(tr)
    assert not v.passed
    assert v.violation.time == pytest.approx((5 - np.sqrt(21)) / 2, abs=1e-9)
    assert v.violation.cycle == 1 and v.violation.phase == "dyn_t"


def test_zero_cycle_trace():
    tr = _run(WorldState(0, 10, 0, 26, 8, 0, 0, 1, P.tau), Fixed(0.0), ConstantLead(0.0), 0)
    assert check_cycle_invariants(tr, P).passed
    assert check_trace_safety(tr).passed


def test_invariant_failure_located():
    res = falsify(P, 0.0)
    v = check_cycle_invariants(res.trace, P)
    assert not v.passed
    assert v.violation.cycle == 1
    assert v.violation.conjunct == "x_l - x_f > v_f^2/(2b) - v_l^2/(2B)"
    assert not check_trace_safety(res.trace).passed


def test_ghosts_absent_is_not_applicable():
    tr = _run(WorldState(0, 0, 0, 10, 0, 0, 0, 0, P.tau), Fixed(0.0), ConstantLead(0.0), 3,
              ghosts=False)
    v = check_diff_invariants(tr, P)
    assert not v.applicable


def test_worked_state_reaches_stopped_lead_ghost():
    tr = _run(WorldState(0, 10, 0, 22, 8, 0, 8, 0, P.tau), MaxSpeed(30.0), FullBrakeLead(), 60)
    v = check_diff_invariants(tr, P)
    assert v.passed
    assert v.detail["stopped_lead_samples"] > 0
    assert check_trace_safety(tr).passed and check_cycle_invariants(tr, P).passed


def test_corrupted_clock_detected():
    tr = _run(WorldState(0, 0, 0, 10, 5, 0, 0, 1, 0.01), AlwaysBrake(), ConstantLead(0.0), 3)
    v = check_diff_invariants(tr, P)
    assert not v.passed
    assert v.violation.conjunct == "D_t,1: t_f >= tau"
    assert v.violation.cycle == 0


def test_discontinuous_trace_rejected():
    tr = _run(WorldState(0, 0, 0, 10, 0, 0, 0, 0, P.tau), Fixed(0.0), ConstantLead(0.0), 3)
    r = tr.records[1]
    tr.records[1] = dataclasses.replace(r, pre=r.pre.replace(x_l=np.array([11.0])))
    with pytest.raises(TraceError):
        validate_trace(tr)
    with pytest.raises(TraceError):
        check_trace_safety(tr)


def test_batch_verdicts_match_single_runs():
    n = 30
    rng = np.random.default_rng(4)
    v = rng.uniform(0, 20, n)
    w = WorldState(np.zeros(n), v, 0.0, rng.uniform(0.5, 40, n), v, 0.0, v, 0, P.tau)
    cfg = SimConfig(P, RandomAdmissible(), RandomLead(v_max=30), Channel(P.tau, 0.3, UniformDelay()),
                    TimingLaw("uniform"), ghosts=True, margin_scale=0.0)
    tr = simulate(cfg, w, 40, seed=3)
    for i in range(n):
        one = tr.select(i)
        a = check_trace_safety(tr, run=i)
        b = check_trace_safety(one)
        assert a.passed == b.passed
        assert a.detail["min_gap"] == b.detail["min_gap"]


def test_analytic_vs_dense_on_random_traces():
    """Safety verdicts agree with 1e-5 dense sampling of every segment."""
    n = 400
    rng = np.random.default_rng(8)
    v = rng.uniform(0, 25, n)
    w = WorldState(np.zeros(n), v, 0.0, rng.uniform(0.1, 15, n), rng.uniform(0, 25, n), 0.0,
                   v, 0, P.tau)
    cfg = SimConfig(P, RandomAdmissible(), RandomLead(v_max=30), Channel(P.tau, 0.5),
                    TimingLaw("uniform"), margin_scale=0.0)
    mon = SafetyMonitor()
    mon.begin(w)
    sim = Simulation(cfg, w, 10, rng, observers=[mon])
    tr = sim.run()
    dense = np.full(n, np.inf)
    for rec in tr.records:
        for seg in rec.segments:
            s = seg.start
            g = dense_min_gap(*(np.asarray(q, dtype=float) for q in
                                (s.x_f, s.v_f, s.a_f, s.x_l, s.v_l, s.a_l)),
                              np.asarray(seg.duration, dtype=float), 1e-5)
            dense = np.minimum(dense, g)
    clear = np.abs(dense) > 1e-6
    assert np.any(~mon.passed) and np.any(mon.passed)
    assert np.array_equal((~mon.passed)[clear], (dense <= 0)[clear])
    assert np.all(mon.min_gap <= dense + 1e-12)
