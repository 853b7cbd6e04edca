import csv
import os
import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cacc_envelope.batch import run_batch
from cacc_envelope.cli import main
from cacc_envelope.envelope import Params
from cacc_envelope.errors import ScenarioError
from cacc_envelope.executor import run_scenario
from cacc_envelope.scenario import dump_scenario, load_scenario, parse_scenario
from cacc_envelope.traceio import TRACE_COLUMNS, emit_trace_csv

HERE = os.path.dirname(__file__)
SCEN = os.path.join(HERE, "..", "scenarios")

BASE = """\
params.A = 2.0
params.B = 4.0
params.b = 2.0
params.eps = 0.2
params.tau = 0.05
timing.t_l = 0.1
initial.x_f = 0.0
initial.v_f = 10.0
initial.x_l = 22.0
initial.v_l = 8.0
initial.v_ld = 8.0
initial.pkgdrop = 0
initial.t_f = 0.05
"""


def _with(text, **repl):
    lines = []
    for line in text.splitlines():
        key = line.split("=")[0].strip()
        if key in repl:
            line = f"{key} = {repl[key]}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def test_worked_params_round_trip():
    sc = parse_scenario(BASE)
    assert sc.params == Params(2.0, 4.0, 2.0, 0.2, 0.05)
    again = parse_scenario(dump_scenario(sc))
    assert again == sc


def test_tau_above_eps_rejected():
    with pytest.raises(ScenarioError) as e:
        parse_scenario(_with(BASE, **{"params.tau": "0.3"}))
    assert e.value.conjunct == "eps >= tau"
    assert "eps >= tau" in str(e.value)


def test_zero_gap_rejected():
    with pytest.raises(ScenarioError) as e:
        parse_scenario(_with(BASE, **{"initial.x_l": "0.0"}))
    assert e.value.conjunct == "x_l - x_f > 0"


def test_parse_errors_located():
    with pytest.raises(ScenarioError) as e:
        parse_scenario(BASE + "params.C = 1.0\n")
    assert e.value.key == "params.C" and e.value.line == 14
    with pytest.raises(ScenarioError) as e:
        parse_scenario(BASE + "run.cycles = many\n")
    assert e.value.line == 14
    with pytest.raises(ScenarioError):
        parse_scenario(BASE + "params.A = 3.0\n")
    with pytest.raises(ScenarioError) as e:
        parse_scenario(BASE.replace("timing.t_l = 0.1\n", ""))
    assert e.value.key == "timing.t_l"
    with pytest.raises(ScenarioError):
        load_scenario("/nonexistent/scenario.txt")


@settings(max_examples=100)
@given(st.floats(0.5, 5), st.floats(1, 10), st.floats(0.1, 1), st.floats(0.05, 0.5),
       st.floats(0, 1), st.floats(0, 30), st.floats(0.1, 50), st.integers(0, 2**63 - 1),
       st.sampled_from(["point", "uniform", "truncexp"]), st.booleans())
def test_load_dump_load_idempotent(A, B, bf, eps, tf, v, gap, seed, law, ghosts):
    b = B * bf
    tau = eps * tf
    text = "\n".join([
        f"params.A = {A!r}", f"params.B = {B!r}", f"params.b = {b!r}",
        f"params.eps = {eps!r}", f"params.tau = {tau!r}",
        f"timing.t_l = {eps - tau!r}",
        "initial.x_f = 0.0", f"initial.v_f = {v!r}", f"initial.x_l = {gap + v * v / b!r}",
        f"initial.v_l = {v!r}", f"initial.v_ld = {v!r}", "initial.pkgdrop = 0",
        f"initial.t_f = {tau!r}",
        "lead.name = bang_bang", "lead.switch_prob = 0.3",
        "channel.drop_prob = 0.3", f"channel.delay_law = {law}",
        f"run.seed = {seed}", f"run.ghosts = {str(ghosts).lower()}",
    ])
    try:
        sc = parse_scenario(text)
    except ScenarioError:
        return
    once = dump_scenario(sc)
    sc2 = parse_scenario(once)
    assert sc2 == sc
    assert dump_scenario(sc2) == once


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_trace_csv_row_counts(tmp_path):
    sc = parse_scenario(BASE + "run.cycles = 0\n")
    emit_trace_csv(run_scenario(sc), tmp_path / "a.csv")
    rows = _rows(tmp_path / "a.csv")
    assert rows[0] == TRACE_COLUMNS and len(rows) == 2

    sc = parse_scenario(BASE + "run.cycles = 500\nrun.ghosts = true\n")
    tr = run_scenario(sc)
    for s in (1, 3):
        emit_trace_csv(tr, tmp_path / "b.csv", samples_per_segment=s)
        rows = _rows(tmp_path / "b.csv")
        assert len(rows) - 1 == 2 * s * 500 + 1
        assert rows[0][-4:] == ["x_gf", "v_gf", "x_gl", "v_gl"]
    # float fields carry exactly nine decimals; pkgdrop is an integer
    row = dict(zip(rows[0], rows[5]))
    assert row["pkgdrop"] in ("0", "1")
    assert all(len(row[c].split(".")[1]) == 9 for c in TRACE_COLUMNS[:8] + ["t_f", "gap"])


def test_trace_csv_io_error_names_path(tmp_path):
    sc = parse_scenario(BASE + "run.cycles = 1\n")
    bad = tmp_path / "missing" / "t.csv"
    with pytest.raises(OSError) as e:
        emit_trace_csv(run_scenario(sc), bad)
    assert "missing" in str(e.value)


def test_cli_run_writes_csv_and_figure(tmp_path, capsys):
    out = tmp_path / "run.csv"
    code = main(["run", "--scenario", os.path.join(SCEN, "worked.txt"), "--seed", "3",
                 "--out", str(out)])
    text = capsys.readouterr().out
    assert code == 0
    assert out.exists() and (tmp_path / "run.png").stat().st_size > 0
    assert "safety" in text and "PASS" in text
    first = out.read_bytes()
    main(["run", "--scenario", os.path.join(SCEN, "worked.txt"), "--seed", "3",
          "--out", str(out), "--no-plot"])
    assert out.read_bytes() == first


def test_cli_validate_and_errors(tmp_path, capsys):
    assert main(["validate", "--scenario", os.path.join(SCEN, "worked.txt")]) == 0
    bad = tmp_path / "bad.txt"
    bad.write_text(_with(BASE, **{"params.tau": "0.3"}))
    assert main(["validate", "--scenario", str(bad)]) == 2
    assert "eps >= tau" in capsys.readouterr().err


def test_cli_scan_and_falsify(tmp_path, capsys):
    params = os.path.join(SCEN, "params.txt")
    out = tmp_path / "scan.csv"
    assert main(["scan", "--params", params, "--grid", "vf=0:20:5,vld=0:20:5",
                 "--out", str(out)]) == 0
    assert len(_rows(out)) == 26 and (tmp_path / "scan.png").exists()
    assert main(["falsify", "--params", params, "--margin-scale", "0",
                 "--out", str(tmp_path / "cx.csv")]) == 0
    text = capsys.readouterr().out
    assert "counterexample" in text and "FAIL" in text
    assert main(["falsify", "--params", params, "--margin-scale", "1"]) == 0
    assert "no counterexample" in capsys.readouterr().out


def test_batch_exit_codes(tmp_path, capsys):
    benign = parse_scenario(BASE + "lead.name = constant\npolicy.name = max_speed\n"
                            "policy.V = 30.0\nrun.cycles = 200\n")
    s = run_batch(benign, 1, seed=0)
    assert s.exit_code == 0 and s.violations("safety") == 0

    stripped = load_scenario(os.path.join(SCEN, "stripped_margin.txt"))
    s = run_batch(stripped, 100, seed=0)
    assert s.violations("safety") >= 1 and s.exit_code != 0

    code = main(["batch", "--scenario", os.path.join(SCEN, "stripped_margin.txt"),
                 "--runs", "100", "--seed", "1"])
    assert code != 0
    assert "violations_safety" in capsys.readouterr().out


def test_scripted_human_schedule_from_file():
    sc = parse_scenario(BASE + "policy.name = scripted_human\npolicy.times = 0, 2.5\n"
                        "policy.accels = 3.0, -1.0\nrun.cycles = 50\n")
    tr = run_scenario(sc)
    a = np.array([float(np.atleast_1d(r.segments[0].start.a_f)[0]) for r in tr.records])
    assert np.all(a <= 2.0)


@pytest.mark.skipif(shutil.which("cacc-envelope") is None, reason="console script not installed")
def test_console_script_installed():
    assert shutil.which("cacc-envelope")
