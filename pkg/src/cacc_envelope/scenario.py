"""Line-oriented ``key = value`` scenario files.

Keys are dotted (``params.A = 2.0``); ``#`` starts a comment.  See the
README for the full key reference.  Loading validates parameters, network
timing and the initial state, and rejects a file naming the violated
conjunct.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .envelope import Params, WorldState, initial_violations, params_violations
from .errors import ConfigError, ScenarioError
from .executor import SimConfig
from .network import Channel, NetworkTiming, make_delay_law, timing_violations
from .strategies import ScriptedHuman, TimingLaw, make_lead, make_policy

__all__ = ["Scenario", "parse_scenario", "load_scenario", "dump_scenario", "save_scenario",
           "validate_scenario", "load_params", "KEYS"]

_FLOAT, _INT, _BOOL, _STR, _LIST = "float", "int", "bool", "str", "list"

KEYS: dict[str, str] = {
    **{f"params.{k}": _FLOAT for k in ("A", "B", "b", "eps", "tau")},
    **{f"timing.{k}": _FLOAT for k in ("t_l", "t_dx", "t_fcomp")},
    **{f"initial.{k}": _FLOAT for k in ("x_f", "v_f", "a_f", "x_l", "v_l", "a_l", "v_ld",
                                        "t_f")},
    "initial.pkgdrop": _INT,
    "policy.name": _STR,
    "policy.V": _FLOAT,
    "policy.decel": _FLOAT,
    "policy.p_hold": _FLOAT,
    "policy.times": _LIST,
    "policy.accels": _LIST,
    "lead.name": _STR,
    "lead.accel": _FLOAT,
    "lead.switch_prob": _FLOAT,
    "lead.v_max": _FLOAT,
    "lead.a_max": _FLOAT,
    "channel.drop_prob": _FLOAT,
    "channel.delay_law": _STR,
    "channel.delay": _FLOAT,
    "channel.mean_fraction": _FLOAT,
    "channel.schedule": _LIST,
    "cycle.law": _STR,
    "run.cycles": _INT,
    "run.seed": _INT,
    "run.ghosts": _BOOL,
    "envelope.margin_scale": _FLOAT,
    "envelope.on_violation": _STR,
    "monitor.interior_samples": _INT,
    "output.samples_per_segment": _INT,
}

_REQUIRED = [k for k in KEYS if k.startswith(("params.", "initial."))
             and k not in ("initial.a_f", "initial.a_l")] + ["timing.t_l"]


@dataclass
class Scenario:
    params: Params
    timing: NetworkTiming
    initial: WorldState
    policy: dict = field(default_factory=lambda: {"name": "random_admissible"})
    lead: dict = field(default_factory=lambda: {"name": "random"})
    channel: dict = field(default_factory=lambda: {"drop_prob": 0.0, "delay_law": "point"})
    cycle_law: str = "fill"
    cycles: int = 500
    seed: int = 0
    ghosts: bool = False
    a_l_max: float = 5.0
    margin_scale: float = 1.0
    on_violation: str = "raise"
    interior_samples: int = 8
    samples_per_segment: int = 1

    def make_policy(self, rng=None, n=1):
        kw = {k: v for k, v in self.policy.items() if k != "name"}
        name = self.policy.get("name", "random_admissible")
        if name == "scripted_human" and "times" not in kw:
            horizon = self.cycles * float(self.params.eps) + 1.0
            return ScriptedHuman.random(rng if rng is not None else np.random.default_rng(self.seed),
                                        n, horizon)
        return make_policy(name, **kw)

    def make_lead(self):
        kw = {k: v for k, v in self.lead.items() if k not in ("name", "a_max")}
        return make_lead(self.lead.get("name", "random"), **kw)

    def make_channel(self) -> Channel:
        ch = self.channel
        if ch.get("schedule"):
            return Channel(self.params.tau, schedule=ch["schedule"])
        law_name = ch.get("delay_law", "point")
        kw = {}
        if law_name == "point" and "delay" in ch:
            kw["value"] = ch["delay"]
        if law_name == "truncexp" and "mean_fraction" in ch:
            kw["mean_fraction"] = ch["mean_fraction"]
        return Channel(self.params.tau, ch.get("drop_prob", 0.0), make_delay_law(law_name, **kw))

    def build_config(self, rng=None, n=1) -> SimConfig:
        return SimConfig(self.params, self.make_policy(rng, n), self.make_lead(),
                         self.make_channel(), TimingLaw(self.cycle_law, self.timing.t_l),
                         a_l_max=self.a_l_max, ghosts=self.ghosts,
                         margin_scale=self.margin_scale, on_violation=self.on_violation)


def _parse_value(kind, raw, key, line):
    try:
        if kind == _FLOAT:
            return float(raw)
        if kind == _INT:
            return int(raw, 0)
        if kind == _BOOL:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == _LIST:
            return [None if s.strip().lower() == "drop" else float(s)
                    for s in raw.split(",") if s.strip()]
        return raw
    except ValueError:
        raise ScenarioError(f"line {line}: bad {kind} value {raw!r} for {key}", key=key,
                            line=line)


def parse_scenario(text: str, validate: bool = True) -> Scenario:
    kv: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ScenarioError(f"line {lineno}: expected 'key = value'", line=lineno)
        if key not in KEYS:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}", key=key, line=lineno)
        if key in kv:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}", key=key, line=lineno)
        kv[key] = _parse_value(KEYS[key], val, key, lineno)
    missing = [k for k in _REQUIRED if k not in kv]
    if missing:
        raise ScenarioError(f"missing key {missing[0]!r}", key=missing[0])
    sc = _build(kv)
    if validate:
        validate_scenario(sc)
    return sc


def _section(kv, prefix):
    return {k[len(prefix) + 1:]: v for k, v in kv.items() if k.startswith(prefix + ".")}


def _build(kv) -> Scenario:
    p = Params(**_section(kv, "params"))
    timing = NetworkTiming(**_section(kv, "timing"))
    init = {"a_f": 0.0, "a_l": 0.0, **_section(kv, "initial")}
    w = WorldState(**init)
    sc = Scenario(p, timing, w)
    if "policy.name" in kv or any(k.startswith("policy.") for k in kv):
        sc.policy = {"name": "random_admissible", **_section(kv, "policy")}
    if any(k.startswith("lead.") for k in kv):
        sc.lead = {"name": "random", **_section(kv, "lead")}
    if any(k.startswith("channel.") for k in kv):
        sc.channel = {"drop_prob": 0.0, "delay_law": "point", **_section(kv, "channel")}
    sc.a_l_max = sc.lead.pop("a_max", sc.a_l_max)
    sc.cycle_law = kv.get("cycle.law", sc.cycle_law)
    sc.cycles = kv.get("run.cycles", sc.cycles)
    sc.seed = kv.get("run.seed", sc.seed)
    sc.ghosts = kv.get("run.ghosts", sc.ghosts)
    sc.margin_scale = kv.get("envelope.margin_scale", sc.margin_scale)
    sc.on_violation = kv.get("envelope.on_violation", sc.on_violation)
    sc.interior_samples = kv.get("monitor.interior_samples", sc.interior_samples)
    sc.samples_per_segment = kv.get("output.samples_per_segment", sc.samples_per_segment)
    return sc


def validate_scenario(sc: Scenario) -> None:
    """Raise :class:`ScenarioError` naming the first violated conjunct."""
    bad = params_violations(sc.params)
    if bad:
        raise ScenarioError(f"params violate {bad[0]!r}", key="params", conjunct=bad[0])
    bad = timing_violations(sc.timing, sc.params)
    if bad:
        raise ScenarioError(f"network timing violates {bad[0]!r}", key="timing",
                            conjunct=bad[0])
    bad = initial_violations(sc.initial, sc.params)
    if bad:
        raise ScenarioError(f"initial state violates {bad[0]!r}", key="initial",
                            conjunct=bad[0])
    if sc.cycles < 0:
        raise ScenarioError("run.cycles must be non-negative", key="run.cycles")
    if sc.samples_per_segment < 1:
        raise ScenarioError("output.samples_per_segment must be >= 1",
                            key="output.samples_per_segment")
    if sc.on_violation not in ("raise", "abort", "clamp"):
        raise ScenarioError("envelope.on_violation must be raise, abort or clamp",
                            key="envelope.on_violation")
    try:
        sc.build_config()
    except ConfigError as e:
        raise ScenarioError(str(e)) from e


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {path}: {e.strerror}") from e
    return parse_scenario(text)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return ", ".join("drop" if x is None else repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_scenario(sc: Scenario) -> str:
    lines = []
    for f in fields(sc.params):
        lines.append(f"params.{f.name} = {_fmt(float(getattr(sc.params, f.name)))}")
    for f in fields(sc.timing):
        lines.append(f"timing.{f.name} = {_fmt(float(getattr(sc.timing, f.name)))}")
    for f in fields(sc.initial):
        v = getattr(sc.initial, f.name)
        lines.append(f"initial.{f.name} = {_fmt(int(v) if f.name == 'pkgdrop' else float(v))}")
    for sec, d in (("policy", sc.policy), ("lead", {**sc.lead, "a_max": sc.a_l_max}),
                   ("channel", sc.channel)):
        for k, v in d.items():
            kind = KEYS[f"{sec}.{k}"]
            v = float(v) if kind == _FLOAT else v
            lines.append(f"{sec}.{k} = {_fmt(v)}")
    lines += [
        f"cycle.law = {sc.cycle_law}",
        f"run.cycles = {sc.cycles}",
        f"run.seed = {sc.seed}",
        f"run.ghosts = {_fmt(sc.ghosts)}",
        f"envelope.margin_scale = {_fmt(float(sc.margin_scale))}",
        f"envelope.on_violation = {sc.on_violation}",
        f"monitor.interior_samples = {sc.interior_samples}",
        f"output.samples_per_segment = {sc.samples_per_segment}",
    ]
    return "\n".join(lines) + "\n"


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_scenario(sc))


def load_params(path) -> Params:
    """Read ``params.*`` keys (other scenario keys are ignored) and validate them."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ScenarioError(f"cannot read params file {path}: {e.strerror}") from e
    vals = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ScenarioError(f"line {lineno}: expected 'key = value'", line=lineno)
        if key not in KEYS:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}", key=key, line=lineno)
        if key.startswith("params."):
            vals[key[7:]] = _parse_value(_FLOAT, val.strip(), key, lineno)
    missing = [k for k in ("A", "B", "b", "eps", "tau") if k not in vals]
    if missing:
        raise ScenarioError(f"missing key 'params.{missing[0]}'", key=f"params.{missing[0]}")
    p = Params(**vals)
    bad = params_violations(p)
    if bad:
        raise ScenarioError(f"params violate {bad[0]!r}", key="params", conjunct=bad[0])
    return p
