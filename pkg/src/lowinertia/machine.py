"""Synchronous machine with field and three damper windings, ST1A exciter, PSS
and a proportional governor with first-order turbine.

Generator convention, pu on the machine rating, time in seconds. Fluxes are
in pu; the stator and rotor equations are scaled by ``omega_b``. The step-up
transformer can be folded into the stator (``r_t``, ``x_t``); the AVR then
regulates an estimate of the low-voltage terminal reconstructed from the
high-voltage bus voltage and the stator current.

State layout (14 entries, see ``S_*`` constants)::

    theta, omega, psi_d, psi_q, psi_fd, psi_1d, psi_1q, psi_2q,
    p_tau, v_meas, v_reg, x_washout, x_lead1, x_lead2
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from numba import njit

OMEGA_B = 2.0 * math.pi * 50.0

N_STATES = 14
S_THETA, S_OMEGA, S_PSI_D, S_PSI_Q, S_PSI_FD, S_PSI_1D, S_PSI_1Q, S_PSI_2Q = range(8)
S_P_TAU, S_V_MEAS, S_V_REG, S_X_W, S_X_1, S_X_2 = range(8, 14)
STATE_NAMES = ("theta", "omega", "psi_d", "psi_q", "psi_fd", "psi_1d", "psi_1q", "psi_2q",
               "p_tau", "v_meas", "v_reg", "x_washout", "x_lead1", "x_lead2")


@dataclass(frozen=True)
class MachineParams:
    """Round-rotor machine data.

    Electrical defaults are the classic textbook 555 MVA turbo-generator
    (Kundur, *Power System Stability and Control*, Example 3.1) taken on the
    machine's own rating. Exciter and stabiliser values follow the same
    book's two-area study.
    """

    r_a: float = 0.003
    l_l: float = 0.15
    l_ad: float = 1.66
    l_aq: float = 1.61
    l_fd: float = 0.165
    r_fd: float = 0.0006
    l_1d: float = 0.1713
    r_1d: float = 0.0284
    l_1q: float = 0.7252
    r_1q: float = 0.00619
    l_2q: float = 0.125
    r_2q: float = 0.02368
    h: float = 3.7
    d_f: float = 0.0
    d_p: float = 100.0
    tau_g: float = 5.0
    r_t: float = 0.0
    x_t: float = 0.0
    # ST1A
    k_a: float = 200.0
    t_a: float = 0.02
    t_r: float = 0.02
    efd_min: float = -6.4
    efd_max: float = 7.0
    # PSS: washout and two lead-lag stages
    pss_on: bool = True
    pss_k: float = 20.0
    pss_tw: float = 10.0
    pss_t1: float = 0.05
    pss_t2: float = 0.02
    pss_t3: float = 3.0
    pss_t4: float = 5.4
    pss_vmax: float = 0.1
    rating: float = 1.0
    omega_b: float = OMEGA_B

    def __post_init__(self):
        if not (self.h > 0 and self.tau_g > 0):
            raise ValueError("H and tau_g must be positive")
        for name in ("r_a", "r_fd", "r_1d", "r_1q", "r_2q", "r_t", "d_f", "d_p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("l_l", "l_ad", "l_aq", "l_fd", "l_1d", "l_1q", "l_2q", "t_a", "t_r",
                     "pss_tw", "pss_t2", "pss_t4", "rating"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for m in (self.d_matrix(), self.q_matrix()):
            if np.any(np.linalg.eigvalsh(m) <= 0):
                raise ValueError("inductance matrix is not positive definite")

    @property
    def r_s(self) -> float:
        return self.r_a + self.r_t

    @property
    def l_d(self) -> float:
        return self.l_ad + self.l_l + self.x_t

    @property
    def l_q(self) -> float:
        return self.l_aq + self.l_l + self.x_t

    def d_matrix(self) -> np.ndarray:
        """Maps ``(-i_d, i_fd, i_1d)`` to ``(psi_d, psi_fd, psi_1d)``."""
        a = self.l_ad
        return np.array([[self.l_d, a, a], [a, a + self.l_fd, a], [a, a, a + self.l_1d]])

    def q_matrix(self) -> np.ndarray:
        """Maps ``(-i_q, i_1q, i_2q)`` to ``(psi_q, psi_1q, psi_2q)``."""
        a = self.l_aq
        return np.array([[self.l_q, a, a], [a, a + self.l_1q, a], [a, a, a + self.l_2q]])

    def with_transformer(self, r_t: float, x_t: float) -> "MachineParams":
        from dataclasses import replace

        return replace(self, r_t=r_t, x_t=x_t)


# parameter row layout for the compiled kernel
(P_RS, P_RFD, P_R1D, P_R1Q, P_R2Q, P_LAD, P_H, P_DF, P_DP, P_TAUG, P_PSET, P_RT, P_XT,
 P_KA, P_TA, P_TR, P_EMIN, P_EMAX, P_VREF, P_PSS_ON, P_PK, P_PTW, P_PT1, P_PT2, P_PT3, P_PT4,
 P_PVMAX, P_WB, P_RATING) = range(29)
P_DINV = 29  # 9 entries, row-major inverse of the d-axis matrix
P_QINV = 38
N_PARAMS = 47


def param_row(params: MachineParams, p_set: float = 0.0, v_ref: float = 1.0) -> np.ndarray:
    row = np.zeros(N_PARAMS)
    row[P_RS] = params.r_s
    row[P_RFD] = params.r_fd
    row[P_R1D] = params.r_1d
    row[P_R1Q] = params.r_1q
    row[P_R2Q] = params.r_2q
    row[P_LAD] = params.l_ad
    row[P_H] = params.h
    row[P_DF] = params.d_f
    row[P_DP] = params.d_p
    row[P_TAUG] = params.tau_g
    row[P_PSET] = p_set
    row[P_RT] = params.r_t
    row[P_XT] = params.x_t
    row[P_KA] = params.k_a
    row[P_TA] = params.t_a
    row[P_TR] = params.t_r
    row[P_EMIN] = params.efd_min
    row[P_EMAX] = params.efd_max
    row[P_VREF] = v_ref
    row[P_PSS_ON] = 1.0 if params.pss_on else 0.0
    row[P_PK] = params.pss_k
    row[P_PTW] = params.pss_tw
    row[P_PT1] = params.pss_t1
    row[P_PT2] = params.pss_t2
    row[P_PT3] = params.pss_t3
    row[P_PT4] = params.pss_t4
    row[P_PVMAX] = params.pss_vmax
    row[P_WB] = params.omega_b
    row[P_RATING] = params.rating
    row[P_DINV:P_DINV + 9] = np.linalg.inv(params.d_matrix()).ravel()
    row[P_QINV:P_QINV + 9] = np.linalg.inv(params.q_matrix()).ravel()
    return row


# --- compiled kernels -----------------------------------------------------------


@njit(cache=True)
def _mul3(P, k, a, b, c):
    return (P[k] * a + P[k + 1] * b + P[k + 2] * c,
            P[k + 3] * a + P[k + 4] * b + P[k + 5] * c,
            P[k + 6] * a + P[k + 7] * b + P[k + 8] * c)


@njit(cache=True)
def machine_currents(x, o, P):
    """``(i_d, i_q, i_fd, i_1d, i_1q, i_2q)`` from the flux states."""
    nd, i_fd, i_1d = _mul3(P, P_DINV, x[o + S_PSI_D], x[o + S_PSI_FD], x[o + S_PSI_1D])
    nq, i_1q, i_2q = _mul3(P, P_QINV, x[o + S_PSI_Q], x[o + S_PSI_1Q], x[o + S_PSI_2Q])
    return -nd, -nq, i_fd, i_1d, i_1q, i_2q


@njit(cache=True)
def governor_turbine_rate(p_tau, omega, p_set, d_p, tau_g):
    return (p_set + d_p * (1.0 - omega) - p_tau) / tau_g


@njit(cache=True)
def _clamp(v, lo, hi):
    return lo if v < lo else (hi if v > hi else v)


@njit(cache=True)
def pss_output(x, o, P, omega):
    """Stabiliser output and the rates of its three states."""
    if P[P_PSS_ON] == 0.0:
        return 0.0, 0.0, 0.0, 0.0
    y0 = P[P_PK] * (omega - 1.0)
    xw = x[o + S_X_W]
    yw = y0 - xw
    x1 = x[o + S_X_1]
    y1 = x1 + P[P_PT1] / P[P_PT2] * (yw - x1)
    x2 = x[o + S_X_2]
    y2 = x2 + P[P_PT3] / P[P_PT4] * (y1 - x2)
    v = _clamp(y2, -P[P_PVMAX], P[P_PVMAX])
    return v, yw / P[P_PTW], (yw - x1) / P[P_PT2], (y1 - x2) / P[P_PT4]


@njit(cache=True)
def exciter_rates(x, o, P, v_term, v_pss):
    """ST1A with transducer lag: returns ``(E_fd, dv_meas, dv_reg)``."""
    v_m = x[o + S_V_MEAS]
    v_r = x[o + S_V_REG]
    dvm = (v_term - v_m) / P[P_TR]
    dvr = (P[P_KA] * (P[P_VREF] - v_m + v_pss) - v_r) / P[P_TA]
    # the regulator state is held at its limits
    if (v_r >= P[P_EMAX] and dvr > 0.0) or (v_r <= P[P_EMIN] and dvr < 0.0):
        dvr = 0.0
    return _clamp(v_r, P[P_EMIN], P[P_EMAX]), dvm, dvr


@njit(cache=True)
def machine_rhs_dq(x, o, P, v_d, v_q, dx):
    """Write the 14 state rates at ``dx[o:]`` given rotor-frame stator voltage.

    Returns ``(i_d, i_q, T_e)`` with ``i`` the current leaving the machine.
    """
    wb = P[P_WB]
    w = x[o + S_OMEGA]
    psi_d = x[o + S_PSI_D]
    psi_q = x[o + S_PSI_Q]
    i_d, i_q, i_fd, i_1d, i_1q, i_2q = machine_currents(x, o, P)
    r = P[P_RS]
    dx[o + S_PSI_D] = wb * (v_d + r * i_d + w * psi_q)
    dx[o + S_PSI_Q] = wb * (v_q + r * i_q - w * psi_d)

    # terminal voltage on the low-voltage side of the folded transformer
    vt_d = v_d + P[P_RT] * i_d - P[P_XT] * w * i_q
    vt_q = v_q + P[P_RT] * i_q + P[P_XT] * w * i_d
    v_term = math.sqrt(vt_d * vt_d + vt_q * vt_q)
    v_pss, dxw, dx1, dx2 = pss_output(x, o, P, w)
    e_fd, dvm, dvr = exciter_rates(x, o, P, v_term, v_pss)
    dx[o + S_PSI_FD] = wb * P[P_RFD] * (e_fd / P[P_LAD] - i_fd)
    dx[o + S_PSI_1D] = -wb * P[P_R1D] * i_1d
    dx[o + S_PSI_1Q] = -wb * P[P_R1Q] * i_1q
    dx[o + S_PSI_2Q] = -wb * P[P_R2Q] * i_2q

    t_e = psi_d * i_q - psi_q * i_d
    p_tau = x[o + S_P_TAU]
    dx[o + S_THETA] = wb * w
    dx[o + S_OMEGA] = (p_tau / w - t_e - P[P_DF] * w) / (2.0 * P[P_H])
    dx[o + S_P_TAU] = governor_turbine_rate(p_tau, w, P[P_PSET], P[P_DP], P[P_TAUG])
    dx[o + S_V_MEAS] = dvm
    dx[o + S_V_REG] = dvr
    dx[o + S_X_W] = dxw
    dx[o + S_X_1] = dx1
    dx[o + S_X_2] = dx2
    return i_d, i_q, t_e


@njit(cache=True)
def machine_rhs(x, o, P, v1, v2, dx):
    """Machine rates given the stationary-frame bus voltage.

    Returns the stator current in the stationary frame, scaled to the
    network base by the machine rating.
    """
    th = x[o + S_THETA]
    c = math.cos(th)
    s = math.sin(th)
    v_d = c * v1 + s * v2
    v_q = -s * v1 + c * v2
    i_d, i_q, _ = machine_rhs_dq(x, o, P, v_d, v_q, dx)
    k = P[P_RATING]
    return k * (c * i_d - s * i_q), k * (s * i_d + c * i_q)


# --- python-level interface ----------------------------------------------------


@dataclass
class MachineState:
    theta: float = 0.0
    omega: float = 1.0
    psi_d: float = 0.0
    psi_q: float = 0.0
    psi_fd: float = 0.0
    psi_1d: float = 0.0
    psi_1q: float = 0.0
    psi_2q: float = 0.0
    p_tau: float = 0.0
    v_meas: float = 1.0
    v_reg: float = 0.0
    x_washout: float = 0.0
    x_lead1: float = 0.0
    x_lead2: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    @classmethod
    def from_array(cls, a) -> "MachineState":
        return cls(*map(float, a[:N_STATES]))


def flux_from_currents(params: MachineParams, i_d, i_q, i_fd, i_1d=0.0, i_1q=0.0, i_2q=0.0):
    d = params.d_matrix() @ np.array([-i_d, i_fd, i_1d])
    q = params.q_matrix() @ np.array([-i_q, i_1q, i_2q])
    return (*d, *q)  # psi_d, psi_fd, psi_1d, psi_q, psi_1q, psi_2q


def currents_from_flux(params: MachineParams, state: MachineState) -> tuple[float, ...]:
    row = param_row(params)
    return tuple(float(v) for v in machine_currents(state.as_array(), 0, row))


def machine_derivatives(state: MachineState, params: MachineParams, v_dq, p_set: float = 0.0,
                        v_ref: float = 1.0) -> MachineState:
    """Rates of every machine state for a rotor-frame stator voltage ``v_dq``."""
    x = state.as_array()
    dx = np.zeros(N_STATES)
    machine_rhs_dq(x, 0, param_row(params, p_set, v_ref), float(v_dq.x1), float(v_dq.x2), dx)
    return MachineState.from_array(dx)


def electrical_torque(state: MachineState, params: MachineParams) -> float:
    i_d, i_q, *_ = currents_from_flux(params, state)
    return state.psi_d * i_q - state.psi_q * i_d


def governor_turbine(state: MachineState, params: MachineParams, omega: float,
                     p_set: float = 0.0) -> tuple[float, float]:
    """``(dp_tau/dt, p_tau)`` of the droop governor and turbine lag."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    return governor_turbine_rate(state.p_tau, omega, p_set, params.d_p, params.tau_g), state.p_tau


def exciter_avr_pss(state: MachineState, params: MachineParams, v_terminal: float, omega: float,
                    v_ref: float = 1.0) -> tuple[float, tuple[float, float, float, float, float]]:
    """Field voltage and the rates of ``(v_meas, v_reg, x_w, x_1, x_2)``."""
    if v_terminal < 0:
        raise ValueError("terminal voltage magnitude must be >= 0")
    x = state.as_array()
    row = param_row(params, 0.0, v_ref)
    v_pss, dxw, dx1, dx2 = pss_output(x, 0, row, omega)
    e_fd, dvm, dvr = exciter_rates(x, 0, row, v_terminal, v_pss)
    return e_fd, (dvm, dvr, dxw, dx1, dx2)


@dataclass(frozen=True)
class MachineOperatingPoint:
    state: MachineState
    p_set: float
    v_ref: float
    e_fd: float


def initialize_machine(params: MachineParams, v_bus: complex, i_out: complex) -> MachineOperatingPoint:
    """Back-solve the steady state for a stator voltage/current phasor pair.

    ``v_bus`` is the voltage where the (transformer-extended) stator connects
    and ``i_out`` the current leaving the machine, both on the machine base
    and in the network's stationary-frame phasor convention.
    """
    r = params.r_s
    e = v_bus + complex(r, params.l_q) * i_out
    theta = math.atan2(e.imag, e.real) - math.pi / 2
    rot = complex(math.cos(-theta), math.sin(-theta))
    vdq = v_bus * rot
    idq = i_out * rot
    v_d, v_q, i_d, i_q = vdq.real, vdq.imag, idq.real, idq.imag
    psi_d = v_q + r * i_q
    psi_q = -(v_d + r * i_d)
    i_fd = (psi_d + params.l_d * i_d) / params.l_ad
    pd, pfd, p1d, pq, p1q, p2q = flux_from_currents(params, i_d, i_q, i_fd)
    e_fd = params.l_ad * i_fd
    if not params.efd_min <= e_fd <= params.efd_max:
        raise ValueError(f"field voltage {e_fd:.3f} outside exciter limits")
    t_e = pd * i_q - pq * i_d
    p_tau = t_e + params.d_f
    vt = v_bus + complex(params.r_t, params.x_t) * i_out
    v_meas = abs(vt)
    state = MachineState(theta=theta, omega=1.0, psi_d=pd, psi_q=pq, psi_fd=pfd, psi_1d=p1d,
                         psi_1q=p1q, psi_2q=p2q, p_tau=p_tau, v_meas=v_meas, v_reg=e_fd)
    return MachineOperatingPoint(state, p_set=p_tau, v_ref=v_meas + e_fd / params.k_a, e_fd=e_fd)


def params_dict(params: MachineParams) -> dict:
    return asdict(params)
