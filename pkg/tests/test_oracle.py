import numpy as np
import pytest

from cacc_envelope.envelope import Params, WorldState, safe_delay, safe_threshold
from cacc_envelope.errors import DomainError
from cacc_envelope.monitor import check_trace_safety
from cacc_envelope.oracle import (
    boundary_scan,
    falsify,
    oracle_threshold,
    parse_grid,
    worst_case_min_gap,
)
from oracles import step_worst_case

P = Params(2.0, 4.0, 2.0, 0.2, 0.05)


def ws(v_f, v_ld, gap, v_l=None):
    return WorldState(0.0, v_f, 0.0, gap, v_ld if v_l is None else v_l, 0.0, v_ld, 0, P.tau)


def test_creep_only():
    assert worst_case_min_gap(ws(0.0, 0.0, 5.0), P) == pytest.approx(4.92, abs=1e-12)


def test_boundary_coincidence():
    assert worst_case_min_gap(ws(10.0, 8.0, 21.475), P) == pytest.approx(0.0, abs=1e-6)
    assert worst_case_min_gap(ws(10.0, 8.0, 22.0), P) == pytest.approx(0.525, abs=1e-9)


def test_closed_form_vs_time_stepping():
    rng = np.random.default_rng(0)
    n = 60
    v_f = rng.uniform(0, 25, n)
    v_ld = rng.uniform(0, 25, n)
    gap = rng.uniform(0, 40, n)
    u = np.maximum(v_ld - P.B * P.tau, 0.0)
    stepped = step_worst_case(gap, v_f, u, P.A, P.B, P.b, P.eps, 1e-5)
    exact = worst_case_min_gap(WorldState(0.0, v_f, 0.0, gap, v_ld, 0.0, v_ld, 0, P.tau), P)
    # stepping only sees grid instants (and accumulates rounding over ~1e6 steps)
    assert np.all(stepped >= exact - 1e-7)
    assert np.max(np.abs(stepped - exact)) < 1e-6


def test_formula_soundness_random_states():
    rng = np.random.default_rng(1)
    n = 100_000
    A = rng.uniform(0.5, 4, n)
    B = rng.uniform(1, 10, n)
    p = Params(A, B, B * rng.uniform(0.1, 1, n), rng.uniform(0.02, 0.5, n), 0.0)
    p = Params(p.A, p.B, p.b, p.eps, p.eps * rng.uniform(0, 1, n))
    v_f = rng.uniform(0, 40, n)
    v_ld = rng.uniform(0, 40, n)
    thr = np.maximum(safe_threshold(v_f, v_ld, p.tau, p), 0.0)
    gap = thr + 10.0 ** rng.uniform(-6, 1, n)
    w = WorldState(0.0, v_f, 0.0, gap, v_ld, 0.0, v_ld, 0, p.tau)
    assert np.all(safe_delay(w, p))
    assert np.all(worst_case_min_gap(w, p) > 0)


def test_true_lead_model_is_less_strict():
    rng = np.random.default_rng(2)
    v_f = rng.uniform(0, 30, 200)
    v_ld = rng.uniform(0, 30, 200)
    v_l = np.maximum(v_ld - P.B * P.tau * rng.uniform(0, 1, 200), 0.0)
    guaranteed = oracle_threshold(v_f, v_ld, P)
    true = oracle_threshold(v_f, v_ld, P, lead_model="true", v_l=v_l)
    assert np.all(true <= guaranteed + 1e-8)


def test_scan_examples(tmp_path):
    s = boundary_scan(P, [0.0], [0.0])
    assert s.formula_gap[0, 0] == pytest.approx(0.08, abs=1e-12)
    assert s.oracle_gap[0, 0] == pytest.approx(0.08, abs=1e-6)
    s = boundary_scan(P, [10.0], [8.0, 0.1])
    assert s.formula_gap[0].tolist() == pytest.approx([21.475, 29.08], abs=1e-12)
    assert s.oracle_gap[0] == pytest.approx([21.475, 29.08], abs=1e-6)
    assert np.all(s.conservatism >= -s.tol)
    s.to_csv(tmp_path / "scan.csv")
    lines = (tmp_path / "scan.csv").read_text().splitlines()
    assert lines[0] == "v_f,v_ld,formula_gap,oracle_gap,conservatism"
    assert len(lines) == 3


def test_negative_formula_floors_at_zero():
    # lead far faster than follower: any positive gap is safe
    s = boundary_scan(P, [1.0], [30.0])
    assert s.formula_raw[0, 0] < 0
    assert s.formula_gap[0, 0] == 0.0
    assert s.oracle_gap[0, 0] == pytest.approx(0.0, abs=1e-6)


def test_parse_grid():
    vf, vld = parse_grid("vf=0:10:11,vld=0:5:6")
    assert vf.tolist() == list(np.arange(11.0)) and vld.size == 6
    assert parse_grid("3x4")[1].size == 4
    with pytest.raises(DomainError):
        parse_grid("vf=0:1")


@pytest.mark.parametrize("scale", [0.0, 0.5, 0.99])
def test_weakened_guard_collides(scale):
    res = falsify(P, scale)
    assert res is not None
    assert not check_trace_safety(res.trace).passed
    w = res.initial
    assert float(w.gap) > safe_threshold(float(w.v_f), float(w.v_ld), P.tau, P, scale)
    assert float(w.gap) <= safe_threshold(float(w.v_f), float(w.v_ld), P.tau, P)


def test_full_guard_holds():
    assert falsify(P, 1.0) is None
    with pytest.raises(DomainError):
        falsify(P, 1.5)
