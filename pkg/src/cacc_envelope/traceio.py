"""CSV rendering of a single run's trace."""
from __future__ import annotations

import io
import os

import numpy as np

from .executor import ControlMode, Trace, flow
from .kinematics import evolve

__all__ = ["TRACE_COLUMNS", "GHOST_COLUMNS", "trace_rows", "emit_trace_csv", "trace_table",
           "trace_csv_string"]

TRACE_COLUMNS = ["time", "x_f", "v_f", "a_f", "x_l", "v_l", "a_l", "v_ld", "pkgdrop", "t_f",
                 "mode", "gap"]
GHOST_COLUMNS = ["x_gf", "v_gf", "x_gl", "v_gl"]

_MODE_NAMES = {int(m): m.label for m in ControlMode}


def _s(a):
    return float(np.atleast_1d(a)[0])


def trace_rows(trace: Trace, samples_per_segment: int = 1, run: int = 0):
    """Yield one dict per sample: the initial state, then ``samples_per_segment``
    evenly spaced points ending at each segment's end."""
    tr = trace.select(run) if trace.n_runs > 1 else trace
    ghosts = tr.ghosts and all(r.ghosts is not None for r in tr.records)
    w0 = tr.initial
    first = {"time": 0.0, **{k: _s(getattr(w0, k)) for k in TRACE_COLUMNS[1:10]},
             "mode": "initial", "gap": _s(w0.x_l) - _s(w0.x_f)}
    if ghosts:
        first.update(x_gf=_s(w0.x_f), v_gf=_s(w0.v_f), x_gl=_s(w0.x_l), v_gl=_s(w0.v_l))
    yield first
    fr = np.arange(1, samples_per_segment + 1) / samples_per_segment
    for rec in tr.records:
        mode = _MODE_NAMES[int(np.atleast_1d(rec.mode)[0])]
        t0 = _s(rec.t0)
        for seg in rec.segments:
            dur, off = _s(seg.duration), _s(seg.offset)
            for f in fr:
                dt = dur * f
                w = flow(seg.start, dt)
                row = {"time": t0 + off + dt,
                       **{k: _s(getattr(w, k)) for k in TRACE_COLUMNS[1:10]},
                       "mode": mode, "gap": _s(w.x_l) - _s(w.x_f)}
                if ghosts:
                    g = seg.ghost
                    x_gf, v_gf, _, _ = evolve(_s(g.x_gf), _s(g.v_gf), _s(g.a_gf), dt)
                    x_gl, v_gl, _, _ = evolve(_s(g.x_gl), _s(g.v_gl), _s(g.a_gl), dt)
                    row.update(x_gf=float(x_gf), v_gf=float(v_gf), x_gl=float(x_gl),
                               v_gl=float(v_gl))
                yield row


def _fmt(col, v):
    if col == "mode":
        return v
    if col == "pkgdrop":
        return str(int(v))
    return "%.9f" % v


def _write(trace, fh, samples_per_segment, run):
    rows = trace_rows(trace, samples_per_segment, run)
    first = next(rows)
    cols = TRACE_COLUMNS + (GHOST_COLUMNS if "x_gf" in first else [])
    fh.write(",".join(cols) + "\n")
    for row in (first, *rows):
        fh.write(",".join(_fmt(c, row[c]) for c in cols) + "\n")


def emit_trace_csv(trace: Trace, out, samples_per_segment: int = 1, run: int = 0) -> None:
    """Write the trace to ``out`` (a path or a text file object).

    Rows: ``1 + cycles * 2 * samples_per_segment``; floats use 9 fixed decimals.
    """
    if hasattr(out, "write"):
        _write(trace, out, samples_per_segment, run)
        return
    try:
        with open(os.fspath(out), "w", newline="") as fh:
            _write(trace, fh, samples_per_segment, run)
    except OSError as e:
        raise OSError(e.errno, f"cannot write trace CSV: {e.strerror}", os.fspath(out)) from e


def trace_table(trace: Trace, samples_per_segment: int = 1, run: int = 0) -> dict:
    """Column arrays of the same samples (for plotting)."""
    rows = list(trace_rows(trace, samples_per_segment, run))
    return {k: (np.array([r[k] for r in rows]) if k != "mode" else [r[k] for r in rows])
            for k in rows[0]}


def trace_csv_string(trace: Trace, samples_per_segment: int = 1, run: int = 0) -> str:
    buf = io.StringIO()
    emit_trace_csv(trace, buf, samples_per_segment, run)
    return buf.getvalue()
