import numpy as np
import pytest

from cacc_envelope.envelope import Params, WorldState
from cacc_envelope.errors import ConfigError
from cacc_envelope.executor import SimConfig, Simulation
from cacc_envelope.network import (
    Channel,
    Delivered,
    Dropped,
    NetworkTiming,
    PointDelay,
    TruncExpDelay,
    UniformDelay,
    apply_outcome,
    make_delay_law,
    sample_channel,
    timing_violations,
    validate_timing,
)
from cacc_envelope.strategies import AlwaysBrake, FullBrakeLead, RandomAdmissible, RandomLead, TimingLaw

P = Params(2.0, 4.0, 2.0, 0.2, 0.05)


def test_certain_loss_and_point_delivery():
    rng = np.random.default_rng(0)
    assert sample_channel(8.0, 1.0, PointDelay(), rng, P.tau) == Dropped()
    o = sample_channel(8.0, 0.0, PointDelay(), rng, P.tau)
    assert o == Delivered(8.0, P.tau)
    assert o.kind == "delivered"


def test_replay_is_deterministic():
    def seq(seed):
        rng = np.random.default_rng(seed)
        return [sample_channel(5.0, 0.5, UniformDelay(), rng, P.tau) for _ in range(50)]
    assert seq(11) == seq(11)
    assert seq(11) != seq(12)


def test_delay_law_bounds():
    rng = np.random.default_rng(1)
    for law in (PointDelay(), UniformDelay(), TruncExpDelay(0.3), make_delay_law("truncexp")):
        d = law.sample(rng, P.tau, 10_000)
        assert d.min() >= 0 and d.max() <= P.tau
    with pytest.raises(ConfigError):
        Channel(P.tau, 0.0, PointDelay(0.06))
    with pytest.raises(ConfigError):
        make_delay_law("gamma")
    with pytest.raises(ConfigError):
        Channel(P.tau, 1.5)


def test_apply_outcome():
    w = WorldState(0, 10, 0, 30, 8, 0, 8.0, 0, 0.25)
    d = apply_outcome(w, Dropped())
    assert (d.pkgdrop, d.v_ld, d.t_f) == (1, 8.0, 0.25)
    r = apply_outcome(d, Delivered(7.0, 0.03))
    assert (r.pkgdrop, r.v_ld, r.t_f) == (0, 7.0, 0.25)


def test_timing_examples():
    assert validate_timing(NetworkTiming(0.1, 0.01, 0.02), P)
    assert not validate_timing(NetworkTiming(0.2, 0.01, 0.02), P)
    assert timing_violations(NetworkTiming(0.2), P) == ["t_l <= eps - tau"]
    assert timing_violations(NetworkTiming(0.1, 0.06, 0.0), P) == ["t_dx <= tau"]


def test_schedule_repeats_last_entry():
    ch = Channel(P.tau, schedule=[0.01, None])
    rng = np.random.default_rng(0)
    assert ch.draw_delay(rng, 2, 0).tolist() == [0.01, 0.01]
    assert not ch.draw_drop(rng, 1, 0)[0]
    assert ch.draw_drop(rng, 1, 1)[0] and ch.draw_drop(rng, 1, 7)[0]
    assert ch.draw_delay(rng, 1, 7)[0] == P.tau


def test_two_drops_accumulate_clock():
    w = WorldState(0.0, 0.0, 0.0, 50.0, 0.0, 0.0, 0.0, 1, P.tau)
    cfg = SimConfig(P, AlwaysBrake(), FullBrakeLead(), Channel(P.tau, schedule=[None]),
                    TimingLaw("fill"))
    tr = Simulation(cfg, w, 2, 0).run()
    # brake mode never resets the clock: two full cycles of eps each
    assert float(tr.final.t_f[0]) == pytest.approx(P.tau + 2 * P.eps)
    assert tr.final.t_f[0] - P.tau <= 2 * P.eps + 1e-12


def test_staleness_bounds_randomized():
    """Age and staleness bounds at every control instant over many random cycles."""
    n = 2000
    rng = np.random.default_rng(3)
    v = rng.uniform(0, 30, n)
    w = WorldState(np.zeros(n), np.zeros(n), 0.0, np.full(n, 1e6), v, 0.0, v, 0, P.tau)
    cfg = SimConfig(P, RandomAdmissible(), RandomLead(v_max=40),
                    Channel(P.tau, 0.3, UniformDelay()), TimingLaw("uniform"),
                    on_violation="raise")

    class Check:
        bad = 0

        def observe(self, rec):
            pre = rec.pre
            self.bad += int(np.sum(pre.t_f < P.tau))
            fresh = pre.pkgdrop == 0
            stale = np.where(fresh, pre.v_ld - P.B * P.tau, pre.v_ld - P.B * pre.t_f)
            self.bad += int(np.sum(stale > pre.v_l + 1e-9))

    chk = Check()
    Simulation(cfg, w, 50, rng, record=False, observers=[chk]).run()
    assert chk.bad == 0
