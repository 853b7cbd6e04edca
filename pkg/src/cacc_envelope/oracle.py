"""Brute-force checks of the drive guard against the worst case it encodes.

The worst case after a drive decision: the follower accelerates at ``A`` for
a full receiving period ``eps`` and then brakes at ``b`` until it stops,
while the lead brakes at ``B`` from the slowest speed consistent with its
last sample.  Nothing here calls the guard formulas except to compare
against them.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .envelope import Params, WorldState, safe_threshold
from .errors import DomainError
from .executor import SimConfig, Simulation, Trace
from .monitor import SafetyMonitor, Verdict
from .network import Channel
from .strategies import FullBrakeLead, MaxSpeed, TimingLaw

log = logging.getLogger(__name__)

__all__ = [
    "worst_case_profile",
    "worst_case_min_gap",
    "oracle_threshold",
    "BoundaryScan",
    "boundary_scan",
    "FalsifyResult",
    "falsify",
    "parse_grid",
]


def _guaranteed_lead_speed(v_ld, B, tau):
    v_ld = np.asarray(v_ld, dtype=float)
    return np.where(v_ld >= B * tau, v_ld - B * tau, 0.0)


def worst_case_profile(v_f, u, p: Params):
    """Piecewise-constant acceleration description of the worst case.

    Returns breakpoint times (shape ``(4, n)``, ascending) and callables for
    follower/lead displacement and speed.
    """
    v_f = np.asarray(v_f, dtype=float)
    u = np.asarray(u, dtype=float)
    A, B, b, eps = (np.asarray(q, dtype=float) for q in (p.A, p.B, p.b, p.eps))
    v_peak = v_f + A * eps
    t_fs = eps + v_peak / b
    t_ls = u / B

    def fol(t):
        t1 = np.minimum(t, eps)
        d1 = v_f * t1 + 0.5 * A * t1 * t1
        t2 = np.clip(t - eps, 0.0, v_peak / b)
        d2 = v_peak * t2 - 0.5 * b * t2 * t2
        v = np.where(t <= eps, v_f + A * t, np.maximum(v_peak - b * (t - eps), 0.0))
        return d1 + d2, v

    def lead(t):
        tt = np.minimum(t, t_ls)
        return u * tt - 0.5 * B * tt * tt, np.maximum(u - B * t, 0.0)

    br = np.stack(np.broadcast_arrays(np.zeros_like(t_fs), eps, t_ls, t_fs))
    return np.sort(br, axis=0), fol, lead


def worst_case_min_gap(w: WorldState, p: Params, lead_model: str = "guaranteed"):
    """Minimum over all future time of the gap under the worst case.

    ``lead_model="guaranteed"`` starts the lead at ``v_ld - B tau`` (or 0
    when that is negative); ``"true"`` uses the actual ``v_l``.
    """
    if lead_model == "guaranteed":
        u = _guaranteed_lead_speed(w.v_ld, np.asarray(p.B, dtype=float),
                                   np.asarray(p.tau, dtype=float))
    elif lead_model == "true":
        u = np.asarray(w.v_l, dtype=float)
    else:
        raise DomainError(f"unknown lead model {lead_model!r}")
    gap0 = np.asarray(w.gap, dtype=float)
    gap0, v_f, u = np.broadcast_arrays(gap0, np.asarray(w.v_f, dtype=float), u)
    br, fol, lead = worst_case_profile(v_f, u, p)

    def gap(t):
        return gap0 + lead(t)[0] - fol(t)[0]

    def rel_speed(t):
        return lead(t)[1] - fol(t)[1]

    best = np.minimum(gap0, gap(br[-1]))
    for j in range(len(br) - 1):
        lo, hi = br[j], br[j + 1]
        # inside a piece the relative speed is affine; its zero is the only interior extremum
        r0, r1 = rel_speed(lo), rel_speed(hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            tz = lo + (hi - lo) * r0 / (r0 - r1)
        tz = np.where((r0 * r1 < 0) & np.isfinite(tz), tz, lo)
        best = np.minimum(best, np.minimum(gap(hi), gap(np.clip(tz, lo, hi))))
    return best[()] if best.ndim == 0 else best


def oracle_threshold(v_f, v_ld, p: Params, tol: float = 1e-9, lead_model="guaranteed",
                     v_l=None):
    """Smallest initial gap whose worst-case minimum gap stays positive (bisection)."""
    v_f, v_ld = np.broadcast_arrays(np.asarray(v_f, dtype=float),
                                    np.asarray(v_ld, dtype=float))
    v_l = v_ld if v_l is None else np.broadcast_to(np.asarray(v_l, dtype=float), v_f.shape)

    def ok(gap):
        w = WorldState(np.zeros_like(gap), v_f, 0.0, gap, v_l, -float(p.B), v_ld, 0,
                       float(p.tau))
        return worst_case_min_gap(w, p, lead_model) > 0

    lo = np.zeros(v_f.shape)
    hi = np.ones(v_f.shape)
    while True:
        bad = ~ok(hi)
        if not bad.any():
            break
        lo = np.where(bad, hi, lo)
        hi = np.where(bad, 2.0 * hi, hi)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        good = ok(mid)
        hi = np.where(good, mid, hi)
        lo = np.where(good, lo, mid)
    return hi


@dataclass
class BoundaryScan:
    """Per-cell guard threshold vs oracle threshold over a ``(v_f, v_ld)`` grid.

    ``formula_gap`` is the gap the guard requires of a legal state, i.e. the
    guard's threshold floored at zero since legal gaps are positive anyway;
    the unfloored value is kept in ``formula_raw``.
    """

    params: Params
    v_f: np.ndarray
    v_ld: np.ndarray
    formula_raw: np.ndarray
    formula_gap: np.ndarray
    oracle_gap: np.ndarray
    tol: float

    @property
    def conservatism(self) -> np.ndarray:
        return self.formula_gap - self.oracle_gap

    @property
    def max_abs_error(self) -> float:
        return float(np.max(np.abs(self.conservatism)))

    def cell(self, v_f, v_ld):
        i = int(np.argmin(np.abs(self.v_f - v_f)))
        j = int(np.argmin(np.abs(self.v_ld - v_ld)))
        return self.formula_gap[i, j], self.oracle_gap[i, j]

    def rows(self):
        for i, vf in enumerate(self.v_f):
            for j, vld in enumerate(self.v_ld):
                yield (vf, vld, self.formula_gap[i, j], self.oracle_gap[i, j],
                       self.conservatism[i, j])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["v_f", "v_ld", "formula_gap", "oracle_gap", "conservatism"])
            for row in self.rows():
                wr.writerow([f"{x:.9f}" for x in row])


def parse_grid(spec: str) -> tuple[np.ndarray, np.ndarray]:
    """``"vf=0:40:50,vld=0:40:50"`` (lo:hi:count) or ``"NxM"`` over ``[0, 40]``."""
    spec = spec.strip()
    if "=" not in spec:
        try:
            n, m = (int(s) for s in spec.lower().split("x"))
        except ValueError:
            raise DomainError(f"bad grid spec {spec!r}")
        return np.linspace(0.0, 40.0, n), np.linspace(0.0, 40.0, m)
    axes = {}
    for part in spec.split(","):
        key, _, rng = part.partition("=")
        try:
            lo, hi, cnt = rng.split(":")
            axes[key.strip()] = np.linspace(float(lo), float(hi), int(cnt))
        except ValueError:
            raise DomainError(f"bad grid axis {part!r}; expected name=lo:hi:count")
    if set(axes) != {"vf", "vld"}:
        raise DomainError("grid spec needs exactly the axes vf and vld")
    return axes["vf"], axes["vld"]


def boundary_scan(p: Params, vf_grid, vld_grid, tol: float = 1e-9) -> BoundaryScan:
    vf = np.atleast_1d(np.asarray(vf_grid, dtype=float))
    vld = np.atleast_1d(np.asarray(vld_grid, dtype=float))
    VF, VLD = np.meshgrid(vf, vld, indexing="ij")
    raw = np.asarray(safe_threshold(VF, VLD, p.tau, p), dtype=float).reshape(VF.shape)
    oracle = oracle_threshold(VF, VLD, p, tol)
    return BoundaryScan(p, vf, vld, raw, np.maximum(raw, 0.0), oracle, tol)


@dataclass
class FalsifyResult:
    """A collision found against a weakened guard."""

    params: Params
    margin_scale: float
    initial: WorldState
    trace: Trace
    verdict: Verdict
    candidates: int


def _candidates(p: Params, margin_scale, vf_grid, vld_grid, rel_offset):
    VF, VLD = np.meshgrid(vf_grid, vld_grid, indexing="ij")
    VF, VLD = VF.ravel(), VLD.ravel()
    u = _guaranteed_lead_speed(VLD, float(p.B), float(p.tau))
    weak = np.asarray(safe_threshold(VF, VLD, p.tau, p, margin_scale))
    true = np.asarray(safe_threshold(VF, VLD, p.tau, p))
    if margin_scale < 1:
        # inside the weakened guard, outside the true one
        gap = weak + np.maximum(1e-6, rel_offset * (true - weak))
    else:
        gap = true + 1e-6
    keep = gap > 0
    n = int(keep.sum())
    w = WorldState(np.zeros(n), VF[keep], 0.0, gap[keep], u[keep], -float(p.B),
                   VLD[keep], 0, float(p.tau)).as_arrays(n)
    return w


def falsify(p: Params, margin_scale: float = 0.0, *, vf_grid=None, vld_grid=None,
            rel_offset: float = 1e-3, seed: int = 0) -> FalsifyResult | None:
    """Search for a collision when the guard's reactivity margin is scaled down.

    Candidates sit just inside the weakened guard.  Each is run against the
    deterministic worst case: the follower drives whenever the weakened
    guard lets it and otherwise brakes at ``-b``, the lead brakes at ``-B``
    throughout, every cycle uses the full receiving period with delay
    ``tau``, and every packet after the initial sample is lost.  Returns the
    first run the safety monitor rejects, or ``None``.
    """
    if not 0.0 <= margin_scale <= 1.0:
        raise DomainError("margin_scale must lie in [0, 1]")
    vf_grid = np.linspace(1.0, 30.0, 12) if vf_grid is None else np.asarray(vf_grid, float)
    vld_grid = np.linspace(0.0, 30.0, 12) if vld_grid is None else np.asarray(vld_grid, float)
    w = _candidates(p, margin_scale, vf_grid, vld_grid, rel_offset)
    n = int(np.size(w.v_f))
    if n == 0:
        return None
    eps, b = float(p.eps), float(p.b)
    v_top = w.v_f + float(p.A) * eps
    horizon = eps + v_top / b + w.v_l / float(p.B)
    cycles = np.ceil(horizon / eps).astype(int) + 5
    cfg = SimConfig(p, MaxSpeed(V=np.inf), FullBrakeLead(), Channel(p.tau, schedule=[None]),
                    timing=TimingLaw("fill"), margin_scale=margin_scale)
    mon = SafetyMonitor()
    mon.begin(w)
    sim = Simulation(cfg, w, cycles, seed, observers=[mon])
    trace = sim.run()
    failed = np.flatnonzero(~mon.passed)
    log.info("falsify(scale=%g): %d candidates, %d collisions", margin_scale, n, failed.size)
    if failed.size == 0:
        return None
    i = int(failed[0])
    return FalsifyResult(p, margin_scale, w.take(i), trace.select(i), mon.verdict(i), n)
