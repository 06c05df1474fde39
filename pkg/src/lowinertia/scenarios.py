"""Scenarios: what to simulate, validated, serialisable and runnable.

A scenario file is YAML with a ``schema`` version field::

    schema: 1
    name: ieee9-droop-bigstep
    devices:
      1: {kind: sm, p_set: 0.75}
      2: {kind: droop, p_set: 0.75}
      3: {kind: droop, p_set: 0.75}
    p_load: 2.25
    events:
      - {time: 0.5, type: load_step, bus: 7, dp: 0.9}
    limiters: {dc_sat: true, ac_limiter: false, setpoint_limiter: false}
    gains: {all: {k_dc: 100.0}, 2: {d_omega: 0.01}}
    tau_g: 5.0
    solver: {dt: 5.0e-5, t_end: 16.0, stride: 20}
    channels: ["dev*.omega", "dev*.v_dc"]

Unspecified fields take the defaults below.
"""

from __future__ import annotations

import fnmatch
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
import yaml

from .converter import ConverterParams
from .gfc_controls import ControlGains
from .machine import MachineParams
from .metrics import MetricsResult, evaluate
from .reduced import compute_equivalent_gains
from .network import DEVICE_KINDS, DEVICE_NODES, GFC_KINDS, HV_BUSES, DeviceSpec, build_ieee9
from .solver import DeviceTrip, Event, LoadStep, SetpointChange, SimulationTrace
from .system import Limiters, SystemModel

SCHEMA_VERSION = 1
MAX_INIT_RESIDUAL = 1e-4
EVENT_TYPES = ("load_step", "trip", "setpoint")
LIMITER_KEYS = ("dc_sat", "ac_limiter", "setpoint_limiter")
GAIN_KEYS = tuple(f.name for f in fields(ControlGains))
TOP_KEYS = ("schema", "name", "devices", "p_load", "q_load", "events", "limiters", "gains", "tau_g",
            "solver", "channels", "metric_device")


class ScenarioError(ValueError):
    """Every problem found while validating a scenario."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class InitializationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    dt: float = 5e-5
    t_end: float = 16.0
    stride: int = 20


@dataclass(frozen=True)
class Scenario:
    name: str = "custom"
    devices: dict = field(default_factory=dict)  # node -> DeviceSpec
    p_load: float = 2.0
    q_load: float | None = None
    events: tuple = ()
    limiters: dict = field(default_factory=lambda: {"dc_sat": True, "ac_limiter": False,
                                                    "setpoint_limiter": False})
    gains: dict = field(default_factory=dict)  # node or "all" -> overrides
    tau_g: float | None = None
    solver: SolverSettings = field(default_factory=SolverSettings)
    channels: tuple | None = None
    metric_device: int | None = None

    # -- derived views
    @property
    def disturbance_time(self) -> float:
        return min((ev.time for ev in self.events), default=0.0)

    def tripped(self) -> set:
        return {ev.kind.device for ev in self.events if isinstance(ev.kind, DeviceTrip)}

    def gfc_nodes(self) -> list[int]:
        return [n for n, d in sorted(self.devices.items()) if d.kind in GFC_KINDS]

    def frequency_device(self) -> int:
        """Machine speed at node 1 when a machine runs there; else a converter."""
        if self.metric_device is not None:
            return self.metric_device
        out = self.tripped()
        sm_nodes = [n for n, d in sorted(self.devices.items()) if d.kind == "sm" and n not in out]
        if sm_nodes:
            return 1 if 1 in sm_nodes else sm_nodes[0]
        gfc = [n for n in self.gfc_nodes() if n not in out]
        if not gfc:
            raise ScenarioError(["no device left to measure frequency on"])
        return gfc[0]

    def gains_for(self, node: int) -> ControlGains:
        kw = dict(self.gains.get("all", {}))
        kw.update(self.gains.get(node, {}))
        return ControlGains.for_strategy(self.devices[node].kind, **kw)

    # -- variants
    def with_step(self, dp: float, bus: int = 7, time: float = 0.5) -> "Scenario":
        """Same scenario with the first load step set to ``dp``."""
        evs = list(self.events)
        for k, ev in enumerate(evs):
            if isinstance(ev.kind, LoadStep):
                evs[k] = Event(ev.time, LoadStep(ev.kind.bus, dp))
                break
        else:
            evs.append(Event(time, LoadStep(bus, dp)))
        return replace(self, events=tuple(evs))

    def replace_load(self, p_load: float, bus: int | None = None) -> "Scenario":
        s = replace(self, p_load=p_load)
        if bus is not None:
            evs = tuple(Event(ev.time, LoadStep(bus, ev.kind.dp)) if isinstance(ev.kind, LoadStep) else ev
                        for ev in s.events)
            s = replace(s, events=evs)
        return s

    # -- validation and execution
    def validate(self) -> None:
        errors = self.problems()
        if errors:
            raise ScenarioError(errors)

    def problems(self) -> list[str]:
        errors = []
        for node in DEVICE_NODES:
            if node not in self.devices:
                errors.append(f"node {node}: missing device kind")
        for node, dev in self.devices.items():
            if node not in DEVICE_NODES:
                errors.append(f"node {node}: no such device node (expected {list(DEVICE_NODES)})")
        if not self.p_load >= 0:
            errors.append("p_load must be >= 0")
        for k, v in self.limiters.items():
            if k not in LIMITER_KEYS:
                errors.append(f"limiters: unknown toggle {k!r}")
            elif not isinstance(v, bool):
                errors.append(f"limiters.{k}: expected true/false, got {v!r}")
        for key, over in self.gains.items():
            if key != "all" and key not in self.devices:
                errors.append(f"gains: node {key} has no device")
            for g in over:
                if g not in GAIN_KEYS:
                    errors.append(f"gains.{key}: unknown gain {g!r}")
        t_end = self.solver.t_end
        if not (0 < self.solver.dt <= 1e-3):
            errors.append(f"solver.dt must lie in (0, 1e-3], got {self.solver.dt}")
        if not t_end > 0:
            errors.append("solver.t_end must be positive")
        if int(self.solver.stride) != self.solver.stride or self.solver.stride < 1:
            errors.append("solver.stride must be a positive integer")
        for ev in self.events:
            if ev.time > t_end:
                errors.append(f"event at t={ev.time} lies beyond t_end={t_end}")
            k = ev.kind
            if isinstance(k, LoadStep) and k.bus not in HV_BUSES:
                errors.append(f"load step at unknown bus {k.bus}")
            if isinstance(k, (DeviceTrip, SetpointChange)):
                dev = self.devices.get(k.device)
                if dev is None or dev.kind == "none":
                    errors.append(f"event targets node {k.device}, which has no device")
        if self.tau_g is not None and not self.tau_g > 0:
            errors.append("tau_g must be positive")
        if self.metric_device is not None and self.metric_device not in self.devices:
            errors.append(f"metric_device {self.metric_device} has no device")
        return errors

    def build(self) -> SystemModel:
        self.validate()
        q = {} if self.q_load is None else {"q_load": self.q_load}
        topo = build_ieee9(self.devices, self.p_load, **q)
        machine = MachineParams() if self.tau_g is None else replace(MachineParams(), tau_g=self.tau_g)
        lim = Limiters(**{k: self.limiters.get(k, v) for k, v in
                          (("dc_sat", True), ("ac_limiter", False), ("setpoint_limiter", False))})
        gains = {n: self.gains_for(n) for n in self.gfc_nodes()}
        return SystemModel(topo, machine=machine, converter=ConverterParams(), gains=gains, limiters=lim)

    def execute(self, require_tail: bool = True) -> tuple[SimulationTrace, MetricsResult]:
        """Initialise, integrate and score the scenario."""
        model = self.build()
        model.initialize()
        res = model.residual()
        if not res <= MAX_INIT_RESIDUAL:
            raise InitializationError(f"initial state residual {res:.3g} exceeds {MAX_INIT_RESIDUAL}")
        run = model.run(self.events, dt=self.solver.dt, t_end=self.solver.t_end, stride=int(self.solver.stride))
        trace = run.trace
        live_gfc = [n for n in self.gfc_nodes() if n not in self.tripped()]
        dp = next((ev.kind.dp for ev in self.events if isinstance(ev.kind, LoadStep)), 0.0)
        metrics = evaluate(trace, run.status, f"dev{self.frequency_device()}.omega", self.disturbance_time, dp,
                           live_gfc, model.converter.i_dc_max, require_tail=require_tail)
        return select_channels(trace, self.channels), metrics

    def power_change(self, trace: SimulationTrace) -> dict:
        """Output change of every device between the first event and the end."""
        k = max(int(np.searchsorted(trace.t, self.disturbance_time)) - 1, 0)
        return {n: float(trace[f"dev{n}.p"][-1] - trace[f"dev{n}.p"][k])
                for n in sorted(self.devices) if n not in self.tripped()}


def select_channels(trace: SimulationTrace, patterns) -> SimulationTrace:
    if patterns is None:
        return trace
    keep = [c for c in trace.channels if any(fnmatch.fnmatchcase(c, p) for p in patterns)]
    return SimulationTrace(trace.t, {c: trace[c] for c in keep}, {c: trace.units.get(c, "pu") for c in keep})


# -- serialisation ------------------------------------------------------------------------


def _event_to_dict(ev: Event) -> dict:
    k = ev.kind
    if isinstance(k, LoadStep):
        return {"time": ev.time, "type": "load_step", "bus": k.bus, "dp": k.dp}
    if isinstance(k, DeviceTrip):
        return {"time": ev.time, "type": "trip", "device": k.device}
    return {"time": ev.time, "type": "setpoint", "device": k.device, "p_set": k.p_set}


def to_dict(s: Scenario) -> dict:
    d = {
        "schema": SCHEMA_VERSION,
        "name": s.name,
        "devices": {n: {"kind": dev.kind, "p_set": dev.p_set, "v_set": dev.v_set}
                    for n, dev in sorted(s.devices.items())},
        "p_load": s.p_load,
        "events": [_event_to_dict(ev) for ev in s.events],
        "limiters": dict(s.limiters),
        "gains": {k: dict(v) for k, v in s.gains.items()},
        "solver": {"dt": s.solver.dt, "t_end": s.solver.t_end, "stride": s.solver.stride},
    }
    for key in ("q_load", "tau_g", "metric_device"):
        if getattr(s, key) is not None:
            d[key] = getattr(s, key)
    if s.channels is not None:
        d["channels"] = list(s.channels)
    return d


def _number(errors, where, value, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{where}: expected a number, got {value!r}")
        return math.nan
    if integer and int(value) != value:
        errors.append(f"{where}: expected an integer, got {value!r}")
    return int(value) if integer else float(value)


def from_dict(d: dict) -> Scenario:
    """Build a scenario from parsed YAML, collecting every problem."""
    if not isinstance(d, dict):
        raise ScenarioError(["scenario must be a mapping"])
    errors = []
    version = d.get("schema", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        errors.append(f"schema: unsupported version {version!r} (expected {SCHEMA_VERSION})")
    for key in d:
        if key not in TOP_KEYS:
            errors.append(f"unknown field {key!r}")

    devices = {}
    raw_dev = d.get("devices", {})
    if not isinstance(raw_dev, dict):
        errors.append("devices: expected a mapping of node to device")
        raw_dev = {}
    for node, spec in raw_dev.items():
        where = f"devices.{node}"
        try:
            node = int(node)
        except (TypeError, ValueError):
            errors.append(f"{where}: node must be an integer")
            continue
        if isinstance(spec, str):
            spec = {"kind": spec}
        if not isinstance(spec, dict) or "kind" not in spec:
            errors.append(f"node {node}: missing device kind")
            continue
        kind = str(spec["kind"]).lower()
        if kind not in DEVICE_KINDS:
            errors.append(f"node {node}: unknown device kind {spec['kind']!r}")
            continue
        extra = set(spec) - {"kind", "p_set", "v_set"}
        if extra:
            errors.append(f"{where}: unknown field(s) {sorted(extra)}")
        devices[node] = DeviceSpec(kind, _number(errors, f"{where}.p_set", spec.get("p_set", 0.0)),
                                   _number(errors, f"{where}.v_set", spec.get("v_set", 1.0)))

    events = []
    for k, ev in enumerate(d.get("events", []) or []):
        where = f"events[{k}]"
        if not isinstance(ev, dict):
            errors.append(f"{where}: expected a mapping")
            continue
        t = _number(errors, f"{where}.time", ev.get("time"))
        typ = ev.get("type")
        try:
            if typ == "load_step":
                kind = LoadStep(int(ev["bus"]), _number(errors, f"{where}.dp", ev.get("dp")))
            elif typ == "trip":
                kind = DeviceTrip(int(ev["device"]))
            elif typ == "setpoint":
                kind = SetpointChange(int(ev["device"]), _number(errors, f"{where}.p_set", ev.get("p_set")))
            else:
                errors.append(f"{where}.type: expected one of {list(EVENT_TYPES)}, got {typ!r}")
                continue
            events.append(Event(t, kind))
        except KeyError as exc:
            errors.append(f"{where}: missing field {exc.args[0]!r}")
        except (TypeError, ValueError) as exc:
            errors.append(f"{where}: {exc}")

    limiters = {"dc_sat": True, "ac_limiter": False, "setpoint_limiter": False}
    raw_lim = d.get("limiters", {}) or {}
    if isinstance(raw_lim, dict):
        limiters.update(raw_lim)
    else:
        errors.append("limiters: expected a mapping")

    gains = {}
    for key, over in (d.get("gains", {}) or {}).items():
        if key != "all":
            try:
                key = int(key)
            except (TypeError, ValueError):
                errors.append(f"gains: key {key!r} must be a node number or 'all'")
                continue
        if not isinstance(over, dict):
            errors.append(f"gains.{key}: expected a mapping")
            continue
        gains[key] = {g: _number(errors, f"gains.{key}.{g}", v) for g, v in over.items()}

    raw_sol = d.get("solver", {}) or {}
    extra = set(raw_sol) - {"dt", "t_end", "stride"}
    if extra:
        errors.append(f"solver: unknown field(s) {sorted(extra)}")
    base = SolverSettings()
    solver = SolverSettings(
        _number(errors, "solver.dt", raw_sol.get("dt", base.dt)),
        _number(errors, "solver.t_end", raw_sol.get("t_end", base.t_end)),
        _number(errors, "solver.stride", raw_sol.get("stride", base.stride), integer=True),
    )
    opt = {}
    for key in ("q_load", "tau_g"):
        if d.get(key) is not None:
            opt[key] = _number(errors, key, d[key])
    if d.get("metric_device") is not None:
        opt["metric_device"] = int(d["metric_device"])
    channels = d.get("channels")
    if channels is not None:
        if not isinstance(channels, list) or not all(isinstance(c, str) for c in channels):
            errors.append("channels: expected a list of channel-name patterns")
        channels = tuple(channels)
    p_load = _number(errors, "p_load", d.get("p_load", 2.0))
    s = Scenario(name=str(d.get("name", "custom")), devices=devices, p_load=p_load, events=tuple(events),
                 limiters=limiters, gains=gains, solver=solver, channels=channels, **opt)
    # semantic checks run even after syntax errors so that every problem is reported
    flagged = {e.split(":")[0] for e in errors}
    errors += [e for e in s.problems() if e.split(":")[0] not in flagged]
    if errors:
        raise ScenarioError(errors)
    return s


def load_scenario(path_or_preset: str) -> Scenario:
    """Load a YAML scenario file, or a preset by name."""
    if path_or_preset in PRESETS:
        return PRESETS[path_or_preset]()
    try:
        with open(path_or_preset, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ScenarioError([f"{path_or_preset}: no such file or preset"]) from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError([f"{path_or_preset}: parse error{where}: {getattr(exc, 'problem', exc)}"]) from None
    return from_dict(data)


def save_scenario(s: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(to_dict(s), fh, sort_keys=False)


# -- presets --------------------------------------------------------------------------------


def _three(kind_23: str, kind_1: str = "sm", p_sm: float = 0.75, p_gfc: float = 0.75) -> dict:
    return {1: DeviceSpec(kind_1, p_sm), 2: DeviceSpec(kind_23, p_gfc), 3: DeviceSpec(kind_23, p_gfc)}


def _lim(ac: bool = False, sp: bool = False) -> dict:
    return {"dc_sat": True, "ac_limiter": ac, "setpoint_limiter": sp}


def sweep_preset(kind: str) -> Scenario:
    """Base load 2 pu with a step at bus 7 (the sweep overrides its size)."""
    devices = _three("sm" if kind == "allsm" else kind, p_sm=2 / 3, p_gfc=2 / 3)
    return Scenario(f"ieee9-{kind}", devices, p_load=2.0, events=(Event(0.5, LoadStep(7, 0.2)),))


def bigstep_preset(kind: str, ac: bool = False, sp: bool = False, tau_g: float = 5.0) -> Scenario:
    suffix = "".join(["-ac" if ac else "", "-sp" if sp else "", "" if tau_g == 5.0 else f"-tg{tau_g:g}"])
    return Scenario(f"ieee9-{kind}-bigstep{suffix}", _three(kind), p_load=2.25,
                    events=(Event(0.5, LoadStep(7, 0.9)),), limiters=_lim(ac, sp), tau_g=tau_g)


def loss_of_sm_preset(kind: str) -> Scenario:
    return Scenario(f"ieee9-{kind}-loss-of-sm", _three(kind, p_sm=0.6, p_gfc=0.75), p_load=2.1,
                    events=(Event(0.5, DeviceTrip(1)),))


def all_gfc_preset(kind: str) -> Scenario:
    return Scenario(f"ieee9-allgfc-{kind}-bigstep", _three(kind, kind_1=kind), p_load=2.25,
                    events=(Event(0.5, LoadStep(7, 0.9)),))


def _catalog() -> dict:
    cat = {"ieee9-allsm": lambda: sweep_preset("allsm")}
    for kind in GFC_KINDS:
        cat[f"ieee9-{kind}"] = lambda k=kind: sweep_preset(k)
        for ac, sp in ((False, False), (True, False), (True, True)):
            cat[bigstep_preset(kind, ac, sp).name] = lambda k=kind, a=ac, s=sp: bigstep_preset(k, a, s)
        for tg in (1.0,):
            cat[bigstep_preset(kind, True, False, tg).name] = lambda k=kind, t=tg: bigstep_preset(k, True, False, t)
        cat[f"ieee9-{kind}-loss-of-sm"] = lambda k=kind: loss_of_sm_preset(k)
        cat[f"ieee9-allgfc-{kind}-bigstep"] = lambda k=kind: all_gfc_preset(k)
    return cat


PRESETS = _catalog()


def tuned_scenario(kind: str, d_p: float = 100.0, dp: float = 0.2) -> Scenario:
    """One machine and two converters whose gains match the machine droop ``d_p``.

    The horizon covers several governor time constants so the units reach
    their new steady state.
    """
    eq = compute_equivalent_gains(d_p)
    over = {"d_omega": eq.d_omega, "d_p": eq.D_p, "k_dc": eq.k_dc, "eta": eq.eta}
    devices = _three(kind)
    return Scenario(f"ieee9-{kind}-tuned", devices, p_load=2.25, events=(Event(1.0, LoadStep(7, dp)),),
                    gains={"all": over}, solver=SolverSettings(t_end=60.0, stride=100))
