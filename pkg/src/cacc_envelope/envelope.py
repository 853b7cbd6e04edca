"""Constraint predicates of the CACC safe control envelope.

All predicates are strict exactly where the verified formulas are strict and
carry no numeric slack.  Fields of :class:`Params` and :class:`WorldState`
may be floats or equally-shaped numpy arrays (one entry per simulated run);
predicates then return boolean arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .kinematics import PointState

__all__ = [
    "Params",
    "WorldState",
    "AccelSet",
    "check_params",
    "params_violations",
    "check_initial",
    "initial_violations",
    "check_loop_invariant",
    "loop_violations",
    "check_controllability",
    "reactivity_margin",
    "safe_threshold",
    "safe_delay",
    "safe_drop",
    "admissible_accel_set",
]


def _out(a):
    a = np.asarray(a)
    return a[()] if a.ndim == 0 else a


@dataclass(frozen=True)
class Params:
    """The five verified constants.

    A: max follower acceleration, B: max braking deceleration (both vehicles),
    b: min follower braking deceleration, eps: max network receiving period,
    tau: max communication delay.
    """

    A: float
    B: float
    b: float
    eps: float
    tau: float

    def take(self, i) -> "Params":
        """Select run(s) ``i`` when fields are per-run arrays."""
        vals = []
        for f in fields(self):
            v = np.asarray(getattr(self, f.name))
            vals.append(_out(v[i]) if v.ndim else getattr(self, f.name))
        return Params(*vals)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class WorldState:
    """Follower/lead kinematics plus what the follower knows about the lead.

    ``v_ld`` is the last delivered lead velocity, ``pkgdrop`` is 1 when the
    latest packet was lost and ``t_f`` is the staleness clock of ``v_ld``.
    """

    x_f: float
    v_f: float
    a_f: float
    x_l: float
    v_l: float
    a_l: float
    v_ld: float
    pkgdrop: int
    t_f: float

    @property
    def gap(self):
        return _out(np.asarray(self.x_l) - np.asarray(self.x_f))

    @property
    def follower(self) -> PointState:
        return PointState(self.x_f, self.v_f)

    @property
    def lead(self) -> PointState:
        return PointState(self.x_l, self.v_l)

    def replace(self, **kw) -> "WorldState":
        return replace(self, **kw)

    def take(self, i) -> "WorldState":
        """Select run(s) ``i`` from an array-valued state."""
        vals = []
        for f in fields(self):
            v = np.asarray(getattr(self, f.name))
            vals.append(_out(v[i] if v.ndim else v))
        return WorldState(*vals)

    def where(self, mask, other: "WorldState") -> "WorldState":
        """Elementwise ``self if mask else other``."""
        return WorldState(*(
            _out(np.where(mask, getattr(self, f.name), getattr(other, f.name)))
            for f in fields(self)))

    def as_arrays(self, n: int | None = None) -> "WorldState":
        """Copy with every field as a 1-D float/int array of length ``n``."""
        if n is None:
            n = max(np.size(getattr(self, f.name)) for f in fields(self))
        vals = {}
        for f in fields(self):
            dtype = np.int64 if f.name == "pkgdrop" else float
            vals[f.name] = np.array(np.broadcast_to(getattr(self, f.name), (n,)),
                                    dtype=dtype)
        return WorldState(**vals)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class AccelSet:
    """Accelerations the follower may pick at a control instant.

    Union of the drive interval ``[-B, A]`` (when ``drive``), the singleton
    ``{0}`` (when ``stop``) and the brake interval ``[-B, -b]`` (always).
    """

    drive: bool
    stop: bool
    A: float
    B: float
    b: float

    def contains(self, a):
        a = np.asarray(a, dtype=float)
        in_drive = np.asarray(self.drive) & (a >= -self.B) & (a <= self.A)
        in_stop = np.asarray(self.stop) & (a == 0.0)
        in_brake = (a >= -np.asarray(self.B)) & (a <= -np.asarray(self.b))
        return _out(in_drive | in_stop | in_brake)

    def clamp(self, a):
        """Nearest admissible acceleration (ties resolve toward braking)."""
        a = np.asarray(a, dtype=float)
        brake = np.clip(a, -np.asarray(self.B), -np.asarray(self.b))
        best = np.where(np.asarray(self.stop) & (np.abs(a) < np.abs(a - brake)), 0.0, brake)
        driven = np.clip(a, -np.asarray(self.B), np.asarray(self.A))
        return _out(np.where(self.drive, driven, best))

    def pieces(self) -> list[tuple[float, float]]:
        """Closed intervals making up a scalar set, brake interval first."""
        out = [(-float(self.B), -float(self.b))]
        if bool(self.stop):
            out.append((0.0, 0.0))
        if bool(self.drive):
            out.append((-float(self.B), float(self.A)))
        return out


def _params_conjuncts(p: Params):
    A, B, b = np.asarray(p.A), np.asarray(p.B), np.asarray(p.b)
    eps, tau = np.asarray(p.eps), np.asarray(p.tau)
    return [
        ("A > 0", A > 0), ("B > 0", B > 0), ("b > 0", b > 0), ("B >= b", B >= b),
        ("eps > 0", eps > 0), ("tau >= 0", tau >= 0), ("eps >= tau", eps >= tau),
    ]


def check_params(p: Params):
    ok = True
    for _, c in _params_conjuncts(p):
        ok = ok & c
    return _out(ok)


def params_violations(p: Params) -> list[str]:
    return [name for name, c in _params_conjuncts(p) if not np.all(c)]


def _lower_lead_speed(v_ld, B, age):
    """Guaranteed lead speed given a sample of age at most ``age``."""
    return np.asarray(v_ld) - np.asarray(B) * np.asarray(age)


def _common(w: WorldState, p: Params, tol=0.0):
    return [
        ("a_l >= -B", np.asarray(w.a_l) >= -np.asarray(p.B) - tol),
        ("v_f >= 0", np.asarray(w.v_f) >= -tol),
        ("v_l >= 0", np.asarray(w.v_l) >= -tol),
        ("t_f >= tau", np.asarray(w.t_f) >= np.asarray(p.tau) - tol),
    ]


def _braking_bound(w: WorldState, p: Params, v_lower):
    """``gap > v_f^2/2b - v_lower^2/2B`` (the lead term dropped when v_lower < 0)."""
    v_f = np.asarray(w.v_f)
    lead = np.where(v_lower >= 0, v_lower * v_lower / (2.0 * np.asarray(p.B)), 0.0)
    return np.asarray(w.gap) > v_f * v_f / (2.0 * np.asarray(p.b)) - lead


def _initial_conjuncts(w: WorldState, p: Params):
    gap = np.asarray(w.gap)
    v_ld = np.asarray(w.v_ld)
    pk = np.asarray(w.pkgdrop)
    v_lo = _lower_lead_speed(v_ld, p.B, p.tau)
    branch0 = ((pk == 0) & (v_lo <= np.asarray(w.v_l)) & (v_ld >= 0)
               & _braking_bound(w, p, v_lo))
    v_f = np.asarray(w.v_f)
    branch1 = (pk == 1) & (v_ld == 0) & (gap > v_f * v_f / (2.0 * np.asarray(p.b)))
    return _common(w, p) + [
        ("x_l - x_f > 0", gap > 0),
        ("pkgdrop branch", branch0 | branch1),
    ]


def check_initial(w: WorldState, p: Params):
    """Initial-state constraint, including the ``v_ld >= B tau`` case split."""
    ok = True
    for _, c in _initial_conjuncts(w, p):
        ok = ok & c
    return _out(ok)


def initial_violations(w: WorldState, p: Params) -> list[str]:
    out = [name for name, c in _initial_conjuncts(w, p) if not np.all(c)]
    if "pkgdrop branch" in out:
        out.remove("pkgdrop branch")
        out.extend(_branch_detail(w, p))
    return out


def _branch_detail(w: WorldState, p: Params) -> list[str]:
    pk = np.asarray(w.pkgdrop)
    v_ld = np.asarray(w.v_ld)
    v_f = np.asarray(w.v_f)
    if np.all(pk == 1):
        out = []
        if not np.all(v_ld == 0):
            out.append("pkgdrop=1: v_ld = 0")
        if not np.all(np.asarray(w.gap) > v_f * v_f / (2.0 * np.asarray(p.b))):
            out.append("pkgdrop=1: x_l - x_f > v_f^2/(2b)")
        return out
    if np.all(pk == 0):
        v_lo = _lower_lead_speed(v_ld, p.B, p.tau)
        out = []
        if not np.all(v_lo <= np.asarray(w.v_l)):
            out.append("pkgdrop=0: v_ld - B*tau <= v_l")
        if not np.all(v_ld >= 0):
            out.append("pkgdrop=0: v_ld >= 0")
        if not np.all(_braking_bound(w, p, v_lo)):
            out.append("pkgdrop=0: x_l - x_f > v_f^2/(2b) - (v_ld - B*tau)^2/(2B)")
        return out
    return ["pkgdrop in {0, 1}"]


def _loop_conjuncts(w: WorldState, p: Params, tol=0.0):
    gap = np.asarray(w.gap)
    v_f, v_l, v_ld = np.asarray(w.v_f), np.asarray(w.v_l), np.asarray(w.v_ld)
    pk = np.asarray(w.pkgdrop)
    B = np.asarray(p.B)
    stale = (((pk == 0) & (v_ld - B * np.asarray(p.tau) <= v_l + tol))
             | ((pk == 1) & (v_ld - B * np.asarray(w.t_f) <= v_l + tol)))
    return _common(w, p, tol) + [
        ("v_ld >= 0", v_ld >= -tol),
        ("x_l - x_f > 0", gap > 0),
        ("x_l - x_f > v_f^2/(2b) - v_l^2/(2B)",
         gap > v_f * v_f / (2.0 * np.asarray(p.b)) - v_l * v_l / (2.0 * B)),
        ("v_ld staleness bound", stale),
    ]


def check_loop_invariant(w: WorldState, p: Params, tol=0.0):
    """Loop invariant.  ``tol`` relaxes only the non-strict conjuncts, which
    the worst-case adversary meets with equality (the strict gap bounds stay
    exact)."""
    ok = True
    for _, c in _loop_conjuncts(w, p, tol):
        ok = ok & c
    return _out(ok)


def loop_violations(w: WorldState, p: Params, tol=0.0) -> list[str]:
    return [name for name, c in _loop_conjuncts(w, p, tol) if not np.all(c)]


def check_controllability(w: WorldState, p: Params):
    """States from which braking alone keeps the follower behind the lead."""
    gap = np.asarray(w.gap)
    v_f, v_l = np.asarray(w.v_f), np.asarray(w.v_l)
    B = np.asarray(p.B)
    ok = ((np.asarray(w.a_l) >= -B) & (v_f >= 0) & (v_l >= 0) & (gap > 0)
          & (gap > v_f * v_f / (2.0 * np.asarray(p.b)) - v_l * v_l / (2.0 * B)))
    return _out(ok)


def reactivity_margin(v_f, p: Params):
    """Extra gap covering one cycle of full acceleration before braking."""
    A, eps = np.asarray(p.A), np.asarray(p.eps)
    v_f = np.asarray(v_f)
    return _out((A / np.asarray(p.b) + 1.0) * (A / 2.0 * eps * eps + eps * v_f))


def safe_threshold(v_f, v_ld, age, p: Params, margin_scale=1.0):
    """Gap that must be strictly exceeded to drive with a sample of ``age``."""
    v_f = np.asarray(v_f, dtype=float)
    v_lo = _lower_lead_speed(v_ld, p.B, age)
    lead = np.where(v_lo >= 0, v_lo * v_lo / (2.0 * np.asarray(p.B)), 0.0)
    thr = (v_f * v_f / (2.0 * np.asarray(p.b)) - lead
           + np.asarray(margin_scale) * reactivity_margin(v_f, p))
    return _out(thr)


def safe_delay(w: WorldState, p: Params, margin_scale=1.0):
    """Drive condition when the latest packet arrived (sample age <= tau)."""
    return _out(np.asarray(w.gap) > safe_threshold(w.v_f, w.v_ld, p.tau, p, margin_scale))


def safe_drop(w: WorldState, p: Params, margin_scale=1.0):
    """Drive condition after a loss: the sample is ``t_f`` old."""
    return _out(np.asarray(w.gap) > safe_threshold(w.v_f, w.v_ld, w.t_f, p, margin_scale))


def admissible_accel_set(w: WorldState, p: Params, margin_scale=1.0) -> AccelSet:
    pk = np.asarray(w.pkgdrop)
    drive = (((pk == 0) & np.asarray(safe_delay(w, p, margin_scale)))
             | ((pk == 1) & np.asarray(safe_drop(w, p, margin_scale))))
    stop = np.asarray(w.v_f) == 0
    return AccelSet(_out(drive), _out(stop), p.A, p.B, p.b)
