"""Assembled network + device model and its compiled RK4 engine.

:class:`SystemModel` turns a :class:`~lowinertia.network.Topology` plus device
parameters into flat arrays, initialises every state from a load flow and
integrates with a fixed-step RK4 loop compiled by numba.

Layout of the state vector: device blocks in node order (machine 14 states,
converter 18 states), then two states per line, then four per bus (voltage
and shunt-inductor current).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import machine as sm
from .converter import ConverterParams, saturate_dc, switching_stage_xy
from .gfc_controls import (ControlGains, Strategy, current_loop_xy, dc_current_reference, droop_frequency,
                           dvoc_xy, limit_ac_xy, matching_frequency, modulation_xy, oscillator_frequency,
                           power_setpoint_limiter, voltage_loop_xy, voltage_magnitude_pi, vsm_acceleration)
from .network import GFC_KINDS, OperatingPoint, Topology, power_flow_init
from .solver import SANITY_BOUND, Event, DeviceTrip, LoadStep, SetpointChange, SimulationTrace, StateRegistry

OMEGA_B = 2.0 * math.pi * 50.0
COLLAPSE_VDC = 0.3

STATUS_STABLE = 0
STATUS_DC_COLLAPSE = 2
STATUS_DIVERGENT = 3

KIND_SM = 0
KIND_GFC = 1

# converter state layout
N_GFC = 18
G_VDC, G_ITAU, G_IS, G_V, G_IT, G_XV, G_XI = 0, 1, 2, 4, 6, 8, 10
G_THETA, G_OMEGA, G_Z, G_VH, G_PF = 12, 13, 14, 15, 17
GFC_STATE_NAMES = ("v_dc", "i_tau", "i_s1", "i_s2", "v1", "v2", "i_t1", "i_t2", "x_v_d", "x_v_q",
                   "x_i_d", "x_i_q", "theta", "omega", "z_mag", "v_hat1", "v_hat2", "p_filt")

# converter parameter columns
(C_STRAT, C_CDC, C_GDC, C_R, C_LS, C_CS, C_LPU, C_CPU, C_TAUDC, C_IDCMAX, C_VDCS, C_RT, C_LT,
 C_KVP, C_KVI, C_KIP, C_KII, C_KDC, C_KP, C_KI, C_IACMAX, C_ITH, C_GAMMA, C_DW, C_JR, C_DP,
 C_KTH, C_ETA, C_ALPHA, C_KAPPA, C_VSTAR, C_WSTAR, C_PSET, C_QSET, C_PFTAU, C_DCSAT, C_ACLIM,
 C_SPLIM, C_STRICT, C_AW, C_RATING, C_WB, C_MMAX) = range(43)
N_CPARAMS = 43

# output channels per device
CHANNELS = ("omega", "v_dc", "i_tau", "i_dc", "p", "q", "v", "i_s", "dp_lim", "overmod")
N_CH = len(CHANNELS)
CHANNEL_UNITS = {"omega": "pu", "v_dc": "pu", "i_tau": "pu", "i_dc": "pu", "p": "pu", "q": "pu",
                 "v": "pu", "i_s": "pu", "dp_lim": "pu", "overmod": "-"}


@dataclass(frozen=True)
class Limiters:
    dc_sat: bool = True
    ac_limiter: bool = False
    setpoint_limiter: bool = False
    strict_current_p_term: bool = False
    anti_windup: bool = False


# --- compiled right-hand side -------------------------------------------------


@njit(cache=True)
def _gfc_rhs(x, o, C, vb1, vb2, dx, out, want):
    """Converter + control rates. Returns the grid current (system base)."""
    wb = C[C_WB]
    vdc = x[o + G_VDC]
    itau = x[o + G_ITAU]
    is1 = x[o + G_IS]
    is2 = x[o + G_IS + 1]
    v1 = x[o + G_V]
    v2 = x[o + G_V + 1]
    it1 = x[o + G_IT]
    it2 = x[o + G_IT + 1]
    p_meas = v1 * it1 + v2 * it2
    q_meas = v2 * it1 - v1 * it2
    vmag = math.sqrt(v1 * v1 + v2 * v2)
    ismag = math.sqrt(is1 * is1 + is2 * is2)
    if C[C_PFTAU] > 0.0:
        p_used = x[o + G_PF]
        dx[o + G_PF] = (p_meas - p_used) / C[C_PFTAU]
    else:
        p_used = p_meas
        dx[o + G_PF] = 0.0

    dp_lim = 0.0
    if C[C_SPLIM] > 0.0:
        dp_lim = power_setpoint_limiter(ismag, C[C_ITH], C[C_GAMMA])
    pset = C[C_PSET] - dp_lim

    strat = int(C[C_STRAT])
    dx[o + G_THETA] = 0.0
    dx[o + G_OMEGA] = 0.0
    dx[o + G_Z] = 0.0
    dx[o + G_VH] = 0.0
    dx[o + G_VH + 1] = 0.0
    if strat == 4:
        vh1 = x[o + G_VH]
        vh2 = x[o + G_VH + 1]
        d1, d2 = dvoc_xy(vh1, vh2, it1, it2, pset, C[C_QSET], C[C_VSTAR], C[C_ETA], C[C_ALPHA],
                         C[C_KAPPA], C[C_WSTAR], wb)
        dx[o + G_VH] = d1
        dx[o + G_VH + 1] = d2
        w = oscillator_frequency(vh1, vh2, d1, d2, wb)
        thf = math.atan2(vh2, vh1)
        vh_d = math.sqrt(vh1 * vh1 + vh2 * vh2)
    else:
        mag, dz = voltage_magnitude_pi(C[C_VSTAR], vmag, x[o + G_Z], C[C_KP], C[C_KI])
        dx[o + G_Z] = dz
        th = x[o + G_THETA]
        if strat == 1:
            w = droop_frequency(pset, p_used, C[C_DW], C[C_WSTAR])
            thf = th
            vh_d = mag
        elif strat == 2:
            w = x[o + G_OMEGA]
            dx[o + G_OMEGA] = vsm_acceleration(pset, p_used, w, C[C_JR], C[C_DP], C[C_WSTAR])
            thf = th
            vh_d = w * mag
        else:
            w = matching_frequency(vdc, C[C_KTH])
            thf = th + 0.5 * math.pi
            vh_d = mag
        dx[o + G_THETA] = wb * w

    c = math.cos(thf)
    s = math.sin(thf)
    vd = c * v1 + s * v2
    vq = -s * v1 + c * v2
    itd = c * it1 + s * it2
    itq = -s * it1 + c * it2
    isd = c * is1 + s * is2
    isq = -s * is1 + c * is2

    ir_d, ir_q, dxv_d, dxv_q = voltage_loop_xy(vh_d, 0.0, vd, vq, itd, itq, x[o + G_XV], x[o + G_XV + 1],
                                               C[C_KVP], C[C_KVI], C[C_CPU], w)
    limited = False
    irl_d = ir_d
    irl_q = ir_q
    if C[C_ACLIM] > 0.0:
        irl_d, irl_q, limited = limit_ac_xy(ir_d, ir_q, C[C_IACMAX])
    if C[C_STRICT] > 0.0:
        irp_d = ir_d
        irp_q = ir_q
    else:
        irp_d = irl_d
        irp_q = irl_q
    vs_d, vs_q, dxi_d, dxi_q = current_loop_xy(irl_d, irl_q, irp_d, irp_q, isd, isq, vd, vq,
                                               x[o + G_XI], x[o + G_XI + 1], C[C_KIP], C[C_KII],
                                               C[C_LPU], C[C_R], w)
    if limited and C[C_AW] > 0.0:
        dxv_d = 0.0
        dxv_q = 0.0
    dx[o + G_XV] = dxv_d
    dx[o + G_XV + 1] = dxv_q
    dx[o + G_XI] = dxi_d
    dx[o + G_XI + 1] = dxi_q

    vs1 = c * vs_d - s * vs_q
    vs2 = s * vs_d + c * vs_q
    m1, m2 = modulation_xy(vs1, vs2, C[C_VDCS])
    ev1, ev2, i_x = switching_stage_xy(m1, m2, vdc, is1, is2)
    idc_ref = dc_current_reference(vdc, pset, p_meas, i_x, C[C_KDC], C[C_GDC], C[C_VDCS])
    if C[C_DCSAT] > 0.0:
        i_dc = saturate_dc(itau, C[C_IDCMAX])
    else:
        i_dc = itau
    dx[o + G_VDC] = (i_dc - C[C_GDC] * vdc - i_x) / C[C_CDC]
    dx[o + G_ITAU] = (idc_ref - itau) / C[C_TAUDC]
    dx[o + G_IS] = (ev1 - C[C_R] * is1 - v1) / C[C_LS]
    dx[o + G_IS + 1] = (ev2 - C[C_R] * is2 - v2) / C[C_LS]
    dx[o + G_V] = (is1 - it1) / C[C_CS]
    dx[o + G_V + 1] = (is2 - it2) / C[C_CS]
    dx[o + G_IT] = (v1 - vb1 - C[C_RT] * it1) / C[C_LT]
    dx[o + G_IT + 1] = (v2 - vb2 - C[C_RT] * it2) / C[C_LT]

    if want:
        out[0] = w
        out[1] = vdc
        out[2] = itau
        out[3] = i_dc
        out[4] = p_meas
        out[5] = q_meas
        out[6] = vmag
        out[7] = ismag
        out[8] = dp_lim
        out[9] = 1.0 if math.sqrt(m1 * m1 + m2 * m2) > C[C_MMAX] else 0.0
    k = C[C_RATING]
    return k * it1, k * it2


@njit(cache=True)
def system_rhs(x, dx, dev_int, dev_active, gfc_p, sm_p, line_int, line_f, bus_f, line_off, bus_off,
               out, want):
    """Rates of the full state vector; optionally fills per-device outputs."""
    n_bus = bus_f.shape[0]
    # bus current accumulators
    acc = np.zeros((n_bus, 2))
    for b in range(n_bus):
        ob = bus_off + 4 * b
        v1 = x[ob]
        v2 = x[ob + 1]
        acc[b, 0] = -bus_f[b, 1] * v1 - x[ob + 2]
        acc[b, 1] = -bus_f[b, 1] * v2 - x[ob + 3]
        if bus_f[b, 2] > 0.0:
            dx[ob + 2] = v1 * bus_f[b, 2]
            dx[ob + 3] = v2 * bus_f[b, 2]
        else:
            dx[ob + 2] = 0.0
            dx[ob + 3] = 0.0
    for k in range(line_int.shape[0]):
        ol = line_off + 2 * k
        fb = line_int[k, 0]
        tb = line_int[k, 1]
        i1 = x[ol]
        i2 = x[ol + 1]
        of = bus_off + 4 * fb
        ot = bus_off + 4 * tb
        dx[ol] = (x[of] - x[ot] - line_f[k, 0] * i1) / line_f[k, 1]
        dx[ol + 1] = (x[of + 1] - x[ot + 1] - line_f[k, 0] * i2) / line_f[k, 1]
        acc[fb, 0] -= i1
        acc[fb, 1] -= i2
        acc[tb, 0] += i1
        acc[tb, 1] += i2
    for d in range(dev_int.shape[0]):
        kind = dev_int[d, 0]
        row = dev_int[d, 1]
        o = dev_int[d, 2]
        b = dev_int[d, 3]
        ob = bus_off + 4 * b
        n = sm.N_STATES if kind == KIND_SM else N_GFC
        if dev_active[d] == 0.0:
            for j in range(n):
                dx[o + j] = 0.0
            if want:
                for j in range(N_CH):
                    out[d, j] = 0.0
                out[d, 1] = np.nan
            continue
        vb1 = x[ob]
        vb2 = x[ob + 1]
        if kind == KIND_SM:
            P = sm_p[row]
            i1, i2 = sm.machine_rhs(x, o, P, vb1, vb2, dx)
            if want:
                out[d, 0] = x[o + sm.S_OMEGA]
                out[d, 1] = np.nan
                out[d, 2] = x[o + sm.S_P_TAU]
                out[d, 3] = np.nan
                k = P[sm.P_RATING]
                out[d, 4] = (vb1 * i1 + vb2 * i2) / k
                out[d, 5] = (vb2 * i1 - vb1 * i2) / k
                out[d, 6] = math.sqrt(vb1 * vb1 + vb2 * vb2)
                out[d, 7] = math.sqrt(i1 * i1 + i2 * i2) / k
                out[d, 8] = 0.0
                out[d, 9] = 0.0
        else:
            i1, i2 = _gfc_rhs(x, o, gfc_p[row], vb1, vb2, dx, out[d], want)
        acc[b, 0] += i1
        acc[b, 1] += i2
    for b in range(n_bus):
        ob = bus_off + 4 * b
        dx[ob] = acc[b, 0] / bus_f[b, 0]
        dx[ob + 1] = acc[b, 1] / bus_f[b, 0]


@njit(cache=True)
def _dc_collapsed(x, dev_int, dev_active):
    for d in range(dev_int.shape[0]):
        if dev_int[d, 0] == KIND_GFC and dev_active[d] != 0.0:
            if x[dev_int[d, 2] + G_VDC] < COLLAPSE_VDC:
                return True
    return False


@njit(cache=True)
def _record(s, t, x, scratch, samples, tvec, out, dev_int, dev_active, gfc_p, sm_p, line_int, line_f, bus_f,
            line_off, bus_off):
    system_rhs(x, scratch, dev_int, dev_active, gfc_p, sm_p, line_int, line_f, bus_f, line_off, bus_off, out, True)
    n_dev = dev_int.shape[0]
    for d in range(n_dev):
        for j in range(N_CH):
            samples[s, d * N_CH + j] = out[d, j]
    for b in range(bus_f.shape[0]):
        ob = bus_off + 4 * b
        samples[s, n_dev * N_CH + b] = math.sqrt(x[ob] ** 2 + x[ob + 1] ** 2)
    tvec[s] = t


@njit(cache=True)
def run_engine(x0, dt, n_steps, stride, ev_step, ev_kind, ev_target, ev_value,
               dev_int, dev_active, gfc_p, sm_p, line_int, line_f, bus_f, line_off, bus_off,
               stop_on_collapse):
    """Fixed-step RK4 with events; returns ``(x, t, samples, n_written, status, t_stop)``.

    ``samples`` has one row per stored sample: per-device channels followed
    by per-bus voltage magnitude.
    """
    n = x0.shape[0]
    n_dev = dev_int.shape[0]
    n_bus = bus_f.shape[0]
    n_samp = n_steps // stride + 1
    n_col = n_dev * N_CH + n_bus
    samples = np.full((n_samp, n_col), np.nan)
    tvec = np.zeros(n_samp)
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xt = np.empty(n)
    out = np.zeros((n_dev, N_CH))
    dummy = np.zeros((n_dev, N_CH))

    _record(0, 0.0, x, k1, samples, tvec, out, dev_int, dev_active, gfc_p, sm_p, line_int, line_f, bus_f,
            line_off, bus_off)
    written = 1
    ep = 0
    n_ev = ev_step.shape[0]
    status = STATUS_STABLE
    t_stop = n_steps * dt
    for k in range(n_steps):
        while ep < n_ev and ev_step[ep] == k:
            kind = ev_kind[ep]
            tgt = ev_target[ep]
            if kind == 1:
                bus_f[tgt, 1] += ev_value[ep]
            elif kind == 2:
                dev_active[tgt] = 0.0
            elif kind == 3:
                if dev_int[tgt, 0] == KIND_SM:
                    sm_p[dev_int[tgt, 1], sm.P_PSET] = ev_value[ep]
                else:
                    gfc_p[dev_int[tgt, 1], C_PSET] = ev_value[ep]
            ep += 1
        system_rhs(x, k1, dev_int, dev_active, gfc_p, sm_p, line_int, line_f, bus_f, line_off, bus_off, dummy, False)
        for i in range(n):
            xt[i] = x[i] + 0.5 * dt * k1[i]
        system_rhs(xt, k2, dev_int, dev_active, gfc_p, sm_p, line_int, line_f, bus_f, line_off, bus_off, dummy, False)
        for i in range(n):
            xt[i] = x[i] + 0.5 * dt * k2[i]
        system_rhs(xt, k3, dev_int, dev_active, gfc_p, sm_p, line_int, line_f, bus_f, line_off, bus_off, dummy, False)
        for i in range(n):
            xt[i] = x[i] + dt * k3[i]
        system_rhs(xt, k4, dev_int, dev_active, gfc_p, sm_p, line_int, line_f, bus_f, line_off, bus_off, dummy, False)
        bad = False
        for i in range(n):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not (abs(x[i]) <= SANITY_BOUND):
                bad = True
        t = (k + 1) * dt
        if bad:
            status = STATUS_DIVERGENT
            t_stop = t
            break
        if (k + 1) % stride == 0:
            _record(written, t, x, k1, samples, tvec, out, dev_int, dev_active, gfc_p, sm_p, line_int, line_f,
                    bus_f, line_off, bus_off)
            written += 1
        if stop_on_collapse and _dc_collapsed(x, dev_int, dev_active):
            status = STATUS_DC_COLLAPSE
            t_stop = t
            if (k + 1) % stride != 0:
                _record(written, t, x, k1, samples, tvec, out, dev_int, dev_active, gfc_p, sm_p, line_int, line_f,
                    bus_f, line_off, bus_off)
                written += 1
            break
    return x, tvec, samples, written, status, t_stop


# --- python assembly --------------------------------------------------------------


def _gfc_row(strategy: Strategy, conv: ConverterParams, gains: ControlGains, lim: Limiters,
             p_set: float, q_set: float) -> np.ndarray:
    r = np.zeros(N_CPARAMS)
    wb = conv.omega_b
    r[C_STRAT] = int(strategy)
    r[C_CDC] = conv.c_dc
    r[C_GDC] = conv.g_dc
    r[C_R] = conv.r_filter
    r[C_LS] = conv.l_filter / wb
    r[C_CS] = conv.c_filter / wb
    r[C_LPU] = conv.l_filter
    r[C_CPU] = conv.c_filter
    r[C_TAUDC] = conv.tau_dc
    r[C_IDCMAX] = conv.i_dc_max
    r[C_VDCS] = conv.v_dc_star
    r[C_KVP] = gains.k_vp
    r[C_KVI] = gains.k_vi
    r[C_KIP] = gains.k_ip
    r[C_KII] = gains.k_ii
    r[C_KDC] = gains.k_dc
    r[C_KP] = gains.k_p
    r[C_KI] = gains.k_i
    r[C_IACMAX] = gains.i_ac_max
    r[C_ITH] = gains.i_ac_th
    r[C_GAMMA] = gains.gamma_p
    r[C_DW] = gains.d_omega
    r[C_JR] = gains.j_r
    r[C_DP] = gains.d_p
    r[C_KTH] = gains.k_theta
    r[C_ETA] = gains.eta
    r[C_ALPHA] = gains.alpha
    r[C_KAPPA] = gains.kappa
    r[C_VSTAR] = gains.v_star
    r[C_WSTAR] = gains.omega_star
    r[C_PSET] = p_set
    r[C_QSET] = q_set
    r[C_PFTAU] = gains.p_filter_tau
    r[C_DCSAT] = float(lim.dc_sat)
    r[C_ACLIM] = float(lim.ac_limiter)
    r[C_SPLIM] = float(lim.setpoint_limiter)
    r[C_STRICT] = float(lim.strict_current_p_term)
    r[C_AW] = float(lim.anti_windup)
    r[C_RATING] = conv.rating
    r[C_WB] = wb
    r[C_MMAX] = conv.m_max
    return r


@dataclass
class RunResult:
    trace: SimulationTrace
    status: int
    t_stop: float
    x_final: np.ndarray


@dataclass
class SystemModel:
    """A topology with its device parameters, ready to initialise and run."""

    topology: Topology
    machine: sm.MachineParams = field(default_factory=sm.MachineParams)
    converter: ConverterParams = field(default_factory=ConverterParams)
    gains: dict = field(default_factory=dict)  # node -> ControlGains
    limiters: Limiters = field(default_factory=Limiters)
    omega_b: float = OMEGA_B

    def __post_init__(self):
        self.registry = StateRegistry()
        topo = self.topology
        self.device_nodes = list(topo.active_devices())
        self.bus_ids = topo.bus_ids
        self.bus_index = {b: k for k, b in enumerate(self.bus_ids)}
        dev_rows = []
        self.gfc_rows: list[np.ndarray] = []
        self.sm_rows: list[np.ndarray] = []
        self.kinds = {}
        for node, spec in topo.active_devices().items():
            xf = topo.transformer_of(node)
            bus = self.bus_index[xf.to_bus]
            if spec.kind == "sm":
                off = self.registry.add(f"dev{node}", sm.STATE_NAMES)
                dev_rows.append((KIND_SM, len(self.sm_rows), off, bus))
                mp = self.machine.with_transformer(xf.r / self.machine.rating, xf.x / self.machine.rating)
                self.sm_rows.append(sm.param_row(mp))
            else:
                off = self.registry.add(f"dev{node}", GFC_STATE_NAMES)
                dev_rows.append((KIND_GFC, len(self.gfc_rows), off, bus))
                self.gfc_rows.append(np.zeros(N_CPARAMS))
            self.kinds[node] = spec.kind
        self.line_off = len(self.registry)
        for k, ln in enumerate(topo.lines):
            self.registry.add(f"line{ln.from_bus}-{ln.to_bus}", ("i1", "i2"))
        self.bus_off = len(self.registry)
        for b in self.bus_ids:
            self.registry.add(f"bus{b}", ("v1", "v2", "i_l1", "i_l2"))
        self.dev_int = np.array(dev_rows, dtype=np.int64).reshape(-1, 4)
        self.line_int = np.array([[self.bus_index[ln.from_bus], self.bus_index[ln.to_bus]] for ln in topo.lines],
                                 dtype=np.int64)
        self.line_f = np.array([[ln.r_series, ln.l_series / self.omega_b] for ln in topo.lines])
        self.bus_f = self._bus_array()
        self.op: OperatingPoint | None = None
        self.x0: np.ndarray | None = None

    # -- assembly helpers
    def _bus_array(self) -> np.ndarray:
        topo = self.topology
        c = {b.id: b.c_shunt for b in topo.buses}
        g = {b: 0.0 for b in self.bus_ids}
        binv = {b: 0.0 for b in self.bus_ids}
        for ld in topo.loads:
            g[ld.bus] += ld.g
            if ld.b > 0:
                c[ld.bus] += ld.b
            else:
                binv[ld.bus] += -ld.b
        for t in topo.transformers:
            g[t.to_bus] += 1.0 / t.r_m
            binv[t.to_bus] += 1.0 / t.l_m
        arr = np.zeros((len(self.bus_ids), 3))
        for k, b in enumerate(self.bus_ids):
            # inductive susceptance b_L -> inverse inductance omega_b * b_L
            arr[k] = (c[b] / self.omega_b, g[b], binv[b] * self.omega_b)
        return arr

    def gains_for(self, node: int) -> ControlGains:
        if node in self.gains:
            return self.gains[node]
        return ControlGains.for_strategy(self.kinds[node])

    @property
    def sm_p(self) -> np.ndarray:
        return np.array(self.sm_rows).reshape(-1, sm.N_PARAMS)

    @property
    def gfc_p(self) -> np.ndarray:
        return np.array(self.gfc_rows).reshape(-1, N_CPARAMS)

    def offset(self, node: int) -> int:
        return self.registry[(f"dev{node}", GFC_STATE_NAMES[0] if self.kinds[node] != "sm" else sm.STATE_NAMES[0])]

    # -- initialisation
    def initialize(self) -> np.ndarray:
        """Load flow followed by analytic back-solution of every state."""
        op = power_flow_init(self.topology)
        self.op = op
        x = np.zeros(len(self.registry))
        wb = self.omega_b
        topo = self.topology
        vbus = {b: op.voltage[b] for b in self.bus_ids}
        for k, b in enumerate(self.bus_ids):
            o = self.bus_off + 4 * k
            v = vbus[b]
            x[o], x[o + 1] = v.real, v.imag
            linv = self.bus_f[k, 2]
            if linv > 0:
                il = v / (1j * wb / linv)  # v / (j X_L)
                x[o + 2], x[o + 3] = il.real, il.imag
        for k, ln in enumerate(topo.lines):
            i = (vbus[ln.from_bus] - vbus[ln.to_bus]) / ln.z
            x[self.line_off + 2 * k], x[self.line_off + 2 * k + 1] = i.real, i.imag
        for d, node in enumerate(self.device_nodes):
            kind, row, o, b = self.dev_int[d]
            xf = topo.transformer_of(node)
            vn = op.voltage[node]
            vb = vbus[xf.to_bus]
            i_sys = (vn - vb) / complex(xf.r, xf.x)
            if kind == KIND_SM:
                mp = self.machine.with_transformer(xf.r / self.machine.rating, xf.x / self.machine.rating)
                opm = sm.initialize_machine(mp, vb, i_sys / self.machine.rating)
                x[o:o + sm.N_STATES] = opm.state.as_array()
                self.sm_rows[row] = sm.param_row(mp, opm.p_set, opm.v_ref)
            else:
                self._init_gfc(x, node, row, o, vn, i_sys, xf)
        self.x0 = x
        return x

    def _init_gfc(self, x, node, row, o, vn: complex, i_sys: complex, xf) -> None:
        conv = self.converter
        gains = self.gains_for(node)
        strategy = Strategy.parse(self.kinds[node])
        it = i_sys / conv.rating
        s = vn * it.conjugate()
        i_s = it + 1j * conv.c_filter * vn
        v_s = vn + complex(conv.r_filter, conv.l_filter) * i_s
        i_x = (v_s * i_s.conjugate()).real / conv.v_dc_star
        i_tau = conv.g_dc * conv.v_dc_star + i_x
        if conv.rating > 0 and abs(i_tau) > conv.i_dc_max and self.limiters.dc_sat:
            raise ValueError(f"converter at node {node} starts beyond its dc current limit")
        vmag = abs(vn)
        ang = math.atan2(vn.imag, vn.real)
        x[o + G_VDC] = conv.v_dc_star
        x[o + G_ITAU] = i_tau
        x[o + G_IS], x[o + G_IS + 1] = i_s.real, i_s.imag
        x[o + G_V], x[o + G_V + 1] = vn.real, vn.imag
        x[o + G_IT], x[o + G_IT + 1] = it.real, it.imag
        x[o + G_OMEGA] = 1.0
        x[o + G_PF] = s.real
        if strategy is Strategy.DVOC:
            x[o + G_VH], x[o + G_VH + 1] = vn.real, vn.imag
            gains = _with(gains, v_star=vmag)
        else:
            x[o + G_THETA] = ang - (0.5 * math.pi if strategy is Strategy.MATCHING else 0.0)
            if gains.k_i <= 0:
                raise ValueError("voltage magnitude integrator gain must be positive")
            x[o + G_Z] = vmag / gains.k_i
            gains = _with(gains, v_star=vmag)
        r = _gfc_row(strategy, conv, gains, self.limiters, s.real, s.imag)
        # transformer data come from the topology, converted to the unit's base
        r[C_RT] = xf.r * conv.rating
        r[C_LT] = xf.x * conv.rating / conv.omega_b
        self.gfc_rows[row] = r

    # -- evaluation
    def rhs(self, t: float, x: np.ndarray) -> np.ndarray:
        dx = np.zeros_like(x)
        out = np.zeros((len(self.device_nodes), N_CH))
        system_rhs(np.ascontiguousarray(x, dtype=float), dx, self.dev_int, self._active(), self.gfc_p, self.sm_p,
                   self.line_int, self.line_f, self.bus_f, self.line_off, self.bus_off, out, False)
        return dx

    def outputs(self, x: np.ndarray) -> dict:
        dx = np.zeros_like(x)
        out = np.zeros((len(self.device_nodes), N_CH))
        system_rhs(np.ascontiguousarray(x, dtype=float), dx, self.dev_int, self._active(), self.gfc_p, self.sm_p,
                   self.line_int, self.line_f, self.bus_f, self.line_off, self.bus_off, out, True)
        return {node: dict(zip(CHANNELS, out[d])) for d, node in enumerate(self.device_nodes)}

    def _active(self) -> np.ndarray:
        return np.ones(len(self.device_nodes))

    def drift(self, x: np.ndarray, omega: float = 1.0) -> np.ndarray:
        """Rates of the synchronously rotating steady state at ``omega`` pu."""
        d = np.zeros_like(x)
        w = self.omega_b * omega
        for i0 in self.rotating_pairs():
            d[i0] = -w * x[i0 + 1]
            d[i0 + 1] = w * x[i0]
        for i in self.angle_states():
            d[i] = w
        return d

    def rotating_pairs(self) -> list[int]:
        pairs = []
        for d, node in enumerate(self.device_nodes):
            kind, _, o, _ = self.dev_int[d]
            if kind == KIND_GFC:
                pairs += [o + G_IS, o + G_V, o + G_IT]
                if self.kinds[node] == "dvoc":
                    pairs.append(o + G_VH)
        pairs += [self.line_off + 2 * k for k in range(len(self.topology.lines))]
        for k in range(len(self.bus_ids)):
            pairs += [self.bus_off + 4 * k, self.bus_off + 4 * k + 2]
        return pairs

    def angle_states(self) -> list[int]:
        idx = []
        for d, node in enumerate(self.device_nodes):
            kind, _, o, _ = self.dev_int[d]
            if kind == KIND_SM:
                idx.append(o + sm.S_THETA)
            elif self.kinds[node] != "dvoc":
                idx.append(o + G_THETA)
        return idx

    def residual(self, x: np.ndarray | None = None) -> float:
        x = self.x0 if x is None else x
        return float(np.max(np.abs(self.rhs(0.0, x) - self.drift(x))))

    def jacobian(self, x: np.ndarray | None = None, h: float = 1e-7) -> np.ndarray:
        """Small-signal matrix in the synchronously rotating frame.

        The stationary-frame model is rotation invariant, so removing the
        linear drift term gives a time-invariant linearisation whose
        eigenvalues decide small-signal stability.
        """
        x = self.x0 if x is None else x
        n = len(x)
        jac = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = h * max(1.0, abs(x[j]))
            jac[:, j] = (self.rhs(0.0, x + e) - self.rhs(0.0, x - e)) / (2 * e[j])
        w = self.omega_b
        for i0 in self.rotating_pairs():
            jac[i0, i0 + 1] += w
            jac[i0 + 1, i0] -= w
        return jac

    def eigenvalues(self, x: np.ndarray | None = None) -> np.ndarray:
        return np.linalg.eigvals(self.jacobian(x))

    def channel_names(self) -> list[str]:
        names = [f"dev{node}.{ch}" for node in self.device_nodes for ch in CHANNELS]
        names += [f"bus{b}.v" for b in self.bus_ids]
        return names

    def event_arrays(self, events, dt: float):
        from .solver import event_steps, sort_events

        events = sort_events(events)
        steps = event_steps(events, dt)
        kinds, tgts, vals = [], [], []
        for ev in events:
            k = ev.kind
            if isinstance(k, LoadStep):
                if k.bus not in self.bus_index:
                    raise ValueError(f"load step at unknown bus {k.bus}")
                kinds.append(1)
                tgts.append(self.bus_index[k.bus])
                vals.append(k.dp)
            elif isinstance(k, DeviceTrip):
                if k.device not in self.device_nodes:
                    raise ValueError(f"trip of unknown device at node {k.device}")
                kinds.append(2)
                tgts.append(self.device_nodes.index(k.device))
                vals.append(0.0)
            elif isinstance(k, SetpointChange):
                if k.device not in self.device_nodes:
                    raise ValueError(f"set-point change for unknown device at node {k.device}")
                kinds.append(3)
                tgts.append(self.device_nodes.index(k.device))
                vals.append(k.p_set)
            else:
                raise TypeError(f"unsupported event {k!r}")
        return (np.array(steps, dtype=np.int64), np.array(kinds, dtype=np.int64),
                np.array(tgts, dtype=np.int64), np.array(vals, dtype=float))

    def run(self, events=(), dt: float = 1e-5, t_end: float = 1.0, stride: int = 100,
            stop_on_collapse: bool = True, x0: np.ndarray | None = None) -> RunResult:
        if self.x0 is None:
            self.initialize()
        x0 = self.x0 if x0 is None else x0
        n_steps = int(round(t_end / dt))
        for ev in events:
            if ev.time > t_end + 1e-12:
                raise ValueError(f"event at t={ev.time} is after t_end={t_end}")
        ev = self.event_arrays(events, dt)
        bus_f = self.bus_f.copy()
        active = np.ones(len(self.device_nodes))
        x, t, samples, written, status, t_stop = run_engine(
            np.ascontiguousarray(x0, dtype=float), dt, n_steps, stride, *ev, self.dev_int, active,
            self.gfc_p.copy(), self.sm_p.copy(), self.line_int, self.line_f, bus_f,
            self.line_off, self.bus_off, stop_on_collapse)
        names = self.channel_names()
        t = t[:written]
        chans = {nm: samples[:written, j].copy() for j, nm in enumerate(names)}
        units = {nm: CHANNEL_UNITS.get(nm.split(".")[-1], "pu") for nm in names}
        return RunResult(SimulationTrace(t, chans, units), int(status), float(t_stop), x)


def _with(gains: ControlGains, **kw) -> ControlGains:
    from dataclasses import replace

    return replace(gains, **kw)
