"""Transmission network: pi-section lines, transformers, loads and the 9-bus system.

Dynamic convention (stationary frame, pu, time in seconds)::

    L di/dt = v_from - v_to - r i           (series branch)
    C dv/dt = sum(i_in) - sum(i_out) - i_load

with ``L = x / omega_b`` and ``C = b / omega_b``.

Node numbering of the 9-bus system: devices sit at nodes 1-3 and connect
through their step-up transformers to buses 4, 8 and 6. Loads are at buses
5, 7 and 9. Branch data are the standard values of the WSCC 9-bus test
case as distributed with MATPOWER (``case9``), renumbered to this layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .frames import TwoAxisSignal, alpha_beta

OMEGA_B = 2.0 * math.pi * 50.0

DEVICE_KINDS = ("sm", "droop", "vsm", "matching", "dvoc", "none")
GFC_KINDS = ("droop", "vsm", "matching", "dvoc")
DEVICE_NODES = (1, 2, 3)
HV_BUS_OF_NODE = {1: 4, 2: 8, 3: 6}
LOAD_BUSES = (5, 7, 9)
HV_BUSES = (4, 5, 6, 7, 8, 9)

# (from, to, r, x, b_total) on 100 MVA, 230 kV
IEEE9_LINES = (
    (4, 9, 0.0100, 0.0850, 0.176),
    (4, 5, 0.0170, 0.0920, 0.158),
    (9, 8, 0.0320, 0.1610, 0.306),
    (5, 6, 0.0390, 0.1700, 0.358),
    (8, 7, 0.0085, 0.0720, 0.149),
    (7, 6, 0.0119, 0.1008, 0.209),
)


class ConfigurationError(ValueError):
    pass


class PowerFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class PiLine:
    from_bus: int
    to_bus: int
    r_series: float
    l_series: float  # reactance at base frequency, pu
    c_shunt_per_end: float  # susceptance, pu

    def __post_init__(self):
        if not (self.r_series > 0 and self.l_series > 0):
            raise ConfigurationError("line r and l must be positive")
        if self.c_shunt_per_end < 0:
            raise ConfigurationError("line shunt capacitance must be >= 0")

    @property
    def z(self) -> complex:
        return complex(self.r_series, self.l_series)


@dataclass(frozen=True)
class Transformer:
    """Two-winding transformer referred to the high-voltage side.

    The magnetising branch (``r_m`` parallel ``l_m``) is placed at the
    high-voltage terminal; with magnetising impedances of hundreds of pu its
    exact position is immaterial.
    """

    from_node: int
    to_bus: int
    r1: float
    r2: float
    l1: float
    l2: float
    r_m: float
    l_m: float
    ratio: float = 1.0

    def __post_init__(self):
        # magnetising branch must dwarf the leakage impedance
        if min(self.r_m, self.l_m) < 100.0 * max(self.l1 + self.l2, self.r1 + self.r2):
            raise ConfigurationError("magnetising impedances must exceed 100x the series impedance")
        if self.r1 < 0 or self.r2 < 0 or self.l1 + self.l2 <= 0:
            raise ConfigurationError("invalid transformer series impedance")

    @property
    def r(self) -> float:
        return self.r1 + self.r2

    @property
    def x(self) -> float:
        return self.l1 + self.l2

    def rebased(self, s_rated: float, s_base: float) -> "Transformer":
        k = s_base / s_rated
        return replace(self, r1=self.r1 * k, r2=self.r2 * k, l1=self.l1 * k, l2=self.l2 * k,
                       r_m=self.r_m * k, l_m=self.l_m * k)

    def in_series(self, other: "Transformer") -> "Transformer":
        """Cascade with ``other``; magnetising branches combine in parallel."""
        return Transformer(self.from_node, other.to_bus, self.r + other.r, 0.0, self.x + other.x, 0.0,
                           1.0 / (1.0 / self.r_m + 1.0 / other.r_m),
                           1.0 / (1.0 / self.l_m + 1.0 / other.l_m))


def mv_hv_transformer(node: int, bus: int, s_base: float = 100.0) -> Transformer:
    """210 MVA, 13.8/230 kV unit transformer."""
    return Transformer(node, bus, 0.0027, 0.0027, 0.08, 0.08, 500.0, 500.0).rebased(210.0, s_base)


def lv_mv_transformer(node: int, bus: int, n_modules: int = 100, s_base: float = 100.0) -> Transformer:
    """``n_modules`` parallel 1.6 MVA, 1/13.8 kV converter transformers."""
    return Transformer(node, bus, 0.0073, 0.0073, 0.018, 0.018, 347.0, 156.0).rebased(1.6 * n_modules, s_base)


def converter_transformer(node: int, bus: int, s_base: float = 100.0) -> Transformer:
    return lv_mv_transformer(node, bus, s_base=s_base).in_series(mv_hv_transformer(node, bus, s_base))


@dataclass(frozen=True)
class ConstantImpedanceLoad:
    bus: int
    g: float
    b: float = 0.0  # b < 0 is inductive (consumes reactive power)

    def __post_init__(self):
        if self.g < 0:
            raise ConfigurationError("load conductance must be >= 0")

    @classmethod
    def from_power(cls, bus: int, p: float, q: float = 0.0, v: float = 1.0) -> "ConstantImpedanceLoad":
        return cls(bus, p / v**2, -q / v**2)


@dataclass(frozen=True)
class BusNode:
    id: int
    c_shunt: float  # aggregate susceptance of all shunt capacitance, pu

    def __post_init__(self):
        if self.c_shunt <= 0:
            raise ConfigurationError(f"bus {self.id} has no shunt capacitance")


@dataclass(frozen=True)
class DeviceSpec:
    kind: str
    p_set: float = 0.0
    v_set: float = 1.0

    def __post_init__(self):
        if self.kind not in DEVICE_KINDS:
            raise ConfigurationError(f"unknown device kind {self.kind!r}")


@dataclass(frozen=True)
class Topology:
    buses: tuple[BusNode, ...]
    lines: tuple[PiLine, ...]
    transformers: tuple[Transformer, ...]
    loads: tuple[ConstantImpedanceLoad, ...]
    devices: dict = field(default_factory=dict)  # node -> DeviceSpec

    def __post_init__(self):
        ids = {b.id for b in self.buses}
        for ln in self.lines:
            if ln.from_bus not in ids or ln.to_bus not in ids:
                raise ConfigurationError(f"line {ln.from_bus}-{ln.to_bus} references an unknown bus")
        for ld in self.loads:
            if ld.bus not in ids:
                raise ConfigurationError(f"load at unknown bus {ld.bus}")
        tnodes = {t.from_node: t for t in self.transformers}
        for node, dev in self.devices.items():
            if node not in tnodes:
                raise ConfigurationError(f"device at node {node} has no transformer")
            if tnodes[node].to_bus not in ids:
                raise ConfigurationError(f"node {node} attaches to unknown bus")
        # connectivity of the bus graph
        adj = {i: set() for i in ids}
        for ln in self.lines:
            adj[ln.from_bus].add(ln.to_bus)
            adj[ln.to_bus].add(ln.from_bus)
        seen, todo = set(), [next(iter(ids))]
        while todo:
            b = todo.pop()
            if b not in seen:
                seen.add(b)
                todo.extend(adj[b] - seen)
        if seen != ids:
            raise ConfigurationError("network graph is not connected")

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def transformer_of(self, node: int) -> Transformer:
        for t in self.transformers:
            if t.from_node == node:
                return t
        raise KeyError(node)

    def active_devices(self) -> dict:
        return {n: d for n, d in sorted(self.devices.items()) if d.kind != "none"}

    def with_devices(self, devices: dict) -> "Topology":
        return replace(self, devices=dict(devices))

    def with_load_scale(self, p_total: float) -> "Topology":
        loads = tuple(ConstantImpedanceLoad(ld.bus, p_total / len(self.loads), ld.b) for ld in self.loads)
        return replace(self, loads=loads)


# reactive demand of the standard case (50 + 30 + 35 Mvar on 100 MVA)
IEEE9_Q_LOAD = 1.15


def build_ieee9(devices: dict, p_load: float = 2.0, q_load: float = IEEE9_Q_LOAD) -> Topology:
    """9-bus system with one device per node 1-3.

    ``devices`` maps node to a kind string or a :class:`DeviceSpec`. The base
    load (active and reactive) is split equally over buses 5, 7 and 9 as
    constant impedances.
    """
    specs = {}
    for node in DEVICE_NODES:
        if node not in devices:
            raise ConfigurationError(f"missing device kind at node {node}")
    for node, dev in devices.items():
        if node not in DEVICE_NODES:
            raise ConfigurationError(f"invalid device node {node}; expected one of {DEVICE_NODES}")
        specs[node] = dev if isinstance(dev, DeviceSpec) else DeviceSpec(str(dev).lower())
    lines = tuple(PiLine(f, t, r, x, b / 2) for f, t, r, x, b in IEEE9_LINES)
    cap = {b: 0.0 for b in HV_BUSES}
    for ln in lines:
        cap[ln.from_bus] += ln.c_shunt_per_end
        cap[ln.to_bus] += ln.c_shunt_per_end
    buses = tuple(BusNode(b, cap[b]) for b in HV_BUSES)
    xfmrs = []
    for node in DEVICE_NODES:
        bus = HV_BUS_OF_NODE[node]
        kind = specs[node].kind
        xfmrs.append(mv_hv_transformer(node, bus) if kind in ("sm", "none") else converter_transformer(node, bus))
    loads = tuple(ConstantImpedanceLoad.from_power(b, p_load / 3, q_load / 3) for b in LOAD_BUSES)
    return Topology(buses, lines, tuple(xfmrs), loads, specs)


# --- dynamic kernels (signal level) -------------------------------------------


def line_derivatives(line: PiLine, i: TwoAxisSignal, v_from: TwoAxisSignal, v_to: TwoAxisSignal,
                     omega_b: float = OMEGA_B) -> TwoAxisSignal:
    """``di/dt`` of the series current of a pi section."""
    d = (v_from - v_to - i * line.r_series) * (omega_b / line.l_series)
    return alpha_beta(d.x1, d.x2)


def bus_derivatives(bus: BusNode, i_net: TwoAxisSignal, omega_b: float = OMEGA_B) -> TwoAxisSignal:
    """``dv/dt`` at a bus for the net current into its shunt capacitance."""
    if bus.c_shunt <= 0:
        raise ConfigurationError(f"bus {bus.id} has no shunt capacitance")
    return i_net * (omega_b / bus.c_shunt)


# --- power flow ---------------------------------------------------------------


@dataclass(frozen=True)
class OperatingPoint:
    nodes: tuple[int, ...]
    voltage: dict  # node -> complex
    injection: dict  # device node -> complex power S = P + jQ into the network
    iterations: int
    mismatch: float

    def current(self, node: int) -> complex:
        return (self.injection[node] / self.voltage[node]).conjugate()


def admittance_matrix(topology: Topology, include_devices_nodes: bool = True):
    nodes = list(topology.bus_ids)
    devs = list(topology.active_devices())
    nodes += devs
    idx = {n: k for k, n in enumerate(nodes)}
    n = len(nodes)
    y = np.zeros((n, n), dtype=complex)

    def branch(a, b, z, ysh_a=0.0, ysh_b=0.0):
        ys = 1.0 / z
        i, j = idx[a], idx[b]
        y[i, i] += ys + ysh_a
        y[j, j] += ys + ysh_b
        y[i, j] -= ys
        y[j, i] -= ys

    for ln in topology.lines:
        branch(ln.from_bus, ln.to_bus, ln.z, 1j * ln.c_shunt_per_end, 1j * ln.c_shunt_per_end)
    for t in topology.transformers:
        k = idx[t.to_bus]
        y[k, k] += 1.0 / t.r_m + 1.0 / (1j * t.l_m)
        if t.from_node in idx:
            branch(t.from_node, t.to_bus, complex(t.r, t.x))
    for ld in topology.loads:
        k = idx[ld.bus]
        y[k, k] += complex(ld.g, ld.b)
    return nodes, y


def power_flow_init(topology: Topology, tol: float = 1e-10, max_iter: int = 50) -> OperatingPoint:
    """Newton-Raphson load flow.

    The lowest-numbered active device is the slack (angle 0); other devices
    are PV nodes at their set-point power and voltage; all buses are PQ with
    zero injection (loads are part of the admittance matrix).
    """
    devs = topology.active_devices()
    if not devs:
        raise PowerFlowError("no device to act as slack")
    nodes, y = admittance_matrix(topology)
    idx = {n: k for k, n in enumerate(nodes)}
    n = len(nodes)
    slack = idx[min(devs)]
    pv = [idx[d] for d in devs if idx[d] != slack]
    pq = [idx[b] for b in topology.bus_ids]
    p_spec = np.zeros(n)
    for d, spec in devs.items():
        p_spec[idx[d]] = spec.p_set
    vm = np.ones(n)
    va = np.zeros(n)
    for d, spec in devs.items():
        vm[idx[d]] = spec.v_set
    ang_idx = np.array(pv + pq, dtype=int)
    mag_idx = np.array(pq, dtype=int)

    def mismatch(v):
        s = v * np.conj(y @ v)
        return np.concatenate([s.real[ang_idx] - p_spec[ang_idx], s.imag[mag_idx]])

    it = 0
    v = vm * np.exp(1j * va)
    f = mismatch(v)
    while np.max(np.abs(f)) > tol:
        if it >= max_iter:
            raise PowerFlowError(f"power flow did not converge in {max_iter} iterations "
                                 f"(mismatch {np.max(np.abs(f)):.3e})")
        ibus = y @ v
        dva = 1j * np.diag(v) @ np.conj(np.diag(ibus) - y @ np.diag(v))
        dvm = np.diag(v) @ np.conj(y @ np.diag(v / np.abs(v))) + np.diag(np.conj(ibus) * v / np.abs(v))
        jac = np.block([
            [dva.real[np.ix_(ang_idx, ang_idx)], dvm.real[np.ix_(ang_idx, mag_idx)]],
            [dva.imag[np.ix_(mag_idx, ang_idx)], dvm.imag[np.ix_(mag_idx, mag_idx)]],
        ])
        dx = np.linalg.solve(jac, -f)
        va[ang_idx] += dx[: len(ang_idx)]
        vm[mag_idx] += dx[len(ang_idx):]
        v = vm * np.exp(1j * va)
        f = mismatch(v)
        it += 1
    s = v * np.conj(y @ v)
    voltage = {node: complex(v[k]) for node, k in idx.items()}
    injection = {d: complex(s[idx[d]]) for d in devs}
    return OperatingPoint(tuple(nodes), voltage, injection, it, float(np.max(np.abs(f))))
