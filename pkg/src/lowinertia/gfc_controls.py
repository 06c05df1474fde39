"""Grid-forming converter control.

The inner cascade (voltage PI, current limiter, current PI, modulation) is
shared by all strategies. The outer reference model is one of droop, virtual
synchronous machine (VSM), matching control or dispatchable virtual oscillator
control (dVOC); it supplies the angle that defines the dq frame and the
voltage reference for the cascade.

Scalar kernels (``*_xy`` and friends) are numba-compiled and used inside the
simulator. The thin wrappers below accept :class:`~lowinertia.frames.TwoAxisSignal`.

Units: voltages, currents and powers in pu. Frequencies in pu of the base
frequency. Integrator gains are per second. dVOC rates are returned per
second as well, which is why :func:`dvoc_xy` takes ``omega_b``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .frames import Frame, FrameMismatchError, TwoAxisSignal, dq

OMEGA_B = 2.0 * math.pi * 50.0


class Strategy(enum.IntEnum):
    DROOP = 1
    VSM = 2
    MATCHING = 3
    DVOC = 4

    @classmethod
    def parse(cls, name: "str | Strategy") -> "Strategy":
        if isinstance(name, Strategy):
            return name
        key = str(name).strip().upper()
        if key not in cls.__members__:
            raise ValueError(f"unknown grid-forming strategy {name!r}")
        return cls[key]


@dataclass(frozen=True)
class ControlGains:
    """Gains of one grid-forming converter, all in pu (time in seconds).

    The defaults make all four strategies share load like a synchronous
    machine with a 1 % droop (``d_p = 100``); see
    :func:`lowinertia.reduced.compute_equivalent_gains`.
    """

    k_vp: float = 0.52
    # 232.2 leaves the matching synchronization mode (~30 Hz) undamped once
    # line dynamics are modelled; 10 keeps every strategy small-signal stable.
    k_vi: float = 10.0
    k_ip: float = 0.73
    k_ii: float = 0.0059
    k_dc: float = 100.0
    k_p: float = 0.001  # ac voltage magnitude PI
    k_i: float = 0.5
    i_ac_max: float = 1.2
    i_ac_th: float = 0.9
    gamma_p: float = 2.3
    # reference models
    d_omega: float = 0.01
    j_r: float = 2.0
    d_p: float = 100.0
    k_theta: float = 1.0
    eta: float = 0.01
    alpha: float = 10.0
    kappa: float = math.pi / 2
    v_star: float = 1.0
    omega_star: float = 1.0
    p_filter_tau: float = 0.0  # 0 disables the measurement filter

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if name == "kappa":
                continue
            if value < 0:
                raise ValueError(f"gain {name} must be >= 0, got {value}")
        if not self.i_ac_th < self.i_ac_max:
            raise ValueError("i_ac_th must be below i_ac_max")
        if not 0.0 <= self.kappa <= math.pi / 2:
            raise ValueError("kappa must lie in [0, pi/2]")

    @classmethod
    def for_strategy(cls, strategy: "Strategy | str", **overrides) -> "ControlGains":
        """Defaults for a strategy.

        The VSM field current enters the voltage multiplied by the electrical
        speed, so its integral gain carries a factor omega_b in per unit. The
        proportional gain is left unscaled: at omega_b times the table value
        the voltage kick after a large step latches the ac current limiter.
        """
        strategy = Strategy.parse(strategy)
        base = cls()
        if strategy is Strategy.VSM:
            base = replace(base, k_p=0.001, k_i=0.0021 * OMEGA_B)
        return replace(base, **overrides)


@dataclass(frozen=True)
class CascadeState:
    x_v: TwoAxisSignal
    x_i: TwoAxisSignal


@dataclass(frozen=True)
class ReferenceModelState:
    strategy: Strategy
    theta: float = 0.0
    omega: float = 1.0
    v_hat: TwoAxisSignal | None = None
    z_mag: float = 0.0

    def __post_init__(self):
        if self.strategy is Strategy.DVOC:
            if self.v_hat is None or self.v_hat.magnitude == 0.0:
                raise ValueError("dVOC needs a non-zero oscillator state")


# --- inner cascade ------------------------------------------------------------


@njit(cache=True)
def voltage_loop_xy(vh_d, vh_q, v_d, v_q, i_d, i_q, xv_d, xv_q, k_vp, k_vi, c, w):
    """Filter-voltage PI with current and capacitor feed-forward.

    ``c`` is the filter susceptance (pu) and ``w`` the frame speed (pu), so
    ``c*w*J v`` is the capacitor current at steady state.
    Returns ``(i_ref_d, i_ref_q, dxv_d, dxv_q)``.
    """
    e_d = vh_d - v_d
    e_q = vh_q - v_q
    ir_d = i_d - c * w * v_q + k_vp * e_d + k_vi * xv_d
    ir_q = i_q + c * w * v_d + k_vp * e_q + k_vi * xv_q
    return ir_d, ir_q, e_d, e_q


@njit(cache=True)
def limit_ac_xy(i_d, i_q, i_max):
    """Scale a current reference into the disc of radius ``i_max``.

    Returns the limited vector and a flag telling whether it was scaled.
    """
    mag = math.sqrt(i_d * i_d + i_q * i_q)
    if mag <= i_max:
        return i_d, i_q, False
    g = i_max / mag
    return g * i_d, g * i_q, True


@njit(cache=True)
def current_loop_xy(ir_d, ir_q, irp_d, irp_q, is_d, is_q, v_d, v_q, xi_d, xi_q, k_ip, k_ii, l, r, w):
    """Filter-current PI with voltage and impedance feed-forward.

    ``ir`` is the reference integrated by ``x_i``; ``irp`` the one used in the
    proportional term (normally the same vector). Returns
    ``(v_s_ref_d, v_s_ref_q, dxi_d, dxi_q)``.
    """
    vs_d = v_d + r * is_d - l * w * is_q + k_ip * (irp_d - is_d) + k_ii * xi_d
    vs_q = v_q + r * is_q + l * w * is_d + k_ip * (irp_q - is_q) + k_ii * xi_q
    return vs_d, vs_q, ir_d - is_d, ir_q - is_q


@njit(cache=True)
def modulation_xy(vs1, vs2, v_dc_star):
    # nominal, not measured, dc voltage in the denominator
    return 2.0 * vs1 / v_dc_star, 2.0 * vs2 / v_dc_star


@njit(cache=True)
def dc_current_reference(v_dc, p_set, p, i_x, k_dc, g_dc, v_dc_star):
    return k_dc * (v_dc_star - v_dc) + p_set / v_dc_star + g_dc * v_dc + (v_dc * i_x - p) / v_dc_star


@njit(cache=True)
def voltage_magnitude_pi(v_set, v_mag, z, k_p, k_i):
    """Returns ``(output, dz)`` of the shared ac voltage magnitude PI."""
    e = v_set - v_mag
    return k_p * e + k_i * z, e


@njit(cache=True)
def power_setpoint_limiter(i_mag, i_th, gamma_p):
    if i_mag <= i_th:
        return 0.0
    return gamma_p * (i_mag - i_th)


# --- reference models ---------------------------------------------------------


@njit(cache=True)
def droop_frequency(p_set, p, d_omega, omega_star):
    return omega_star + d_omega * (p_set - p)


@njit(cache=True)
def vsm_acceleration(p_set, p, omega, j_r, d_p, omega_star):
    """``d omega / dt`` of the virtual rotor."""
    return ((p_set - p) / omega_star + d_p * (omega_star - omega)) / j_r


@njit(cache=True)
def matching_frequency(v_dc, k_theta):
    return k_theta * v_dc


@njit(cache=True)
def dvoc_xy(vh1, vh2, i1, i2, p_set, q_set, v_star, eta, alpha, kappa, omega_star, omega_b):
    """Oscillator rate ``d v_hat / dt`` in the stationary frame, per second."""
    ck = math.cos(kappa)
    sk = math.sin(kappa)
    v2s = v_star * v_star
    # S v_hat with S = [[p, q], [-q, p]] / v*^2
    s1 = (p_set * vh1 + q_set * vh2) / v2s
    s2 = (-q_set * vh1 + p_set * vh2) / v2s
    u1 = s1 - i1
    u2 = s2 - i2
    # rotate by kappa
    r1 = ck * u1 - sk * u2
    r2 = sk * u1 + ck * u2
    phi = alpha / v2s * (v2s - (vh1 * vh1 + vh2 * vh2))
    d1 = -omega_star * vh2 + eta * (r1 + phi * vh1)
    d2 = omega_star * vh1 + eta * (r2 + phi * vh2)
    return omega_b * d1, omega_b * d2


@njit(cache=True)
def oscillator_frequency(vh1, vh2, d1, d2, omega_b):
    """Instantaneous angular speed of a rotating vector, in pu."""
    return (vh1 * d2 - vh2 * d1) / ((vh1 * vh1 + vh2 * vh2) * omega_b)


# --- signal-level wrappers ------------------------------------------------------


def _need_dq(*signals: TwoAxisSignal) -> None:
    for s in signals:
        if s.frame is not Frame.DQ:
            raise FrameMismatchError("cascade loops operate in the reference-model dq frame")


def voltage_loop(v_hat: TwoAxisSignal, v: TwoAxisSignal, i: TwoAxisSignal, state: CascadeState,
                 gains: ControlGains, omega: float, c_filter: float) -> tuple[TwoAxisSignal, TwoAxisSignal]:
    _need_dq(v_hat, v, i, state.x_v)
    r = voltage_loop_xy(v_hat.x1, v_hat.x2, v.x1, v.x2, i.x1, i.x2, state.x_v.x1, state.x_v.x2,
                        gains.k_vp, gains.k_vi, c_filter, omega)
    return dq(r[0], r[1]), dq(r[2], r[3])


def limit_ac_current(i_ref: TwoAxisSignal, i_ac_max: float) -> TwoAxisSignal:
    if i_ac_max <= 0:
        raise ValueError("i_ac_max must be positive")
    a, b, _ = limit_ac_xy(i_ref.x1, i_ref.x2, i_ac_max)
    return TwoAxisSignal(a, b, i_ref.frame)


def current_loop(i_ref: TwoAxisSignal, i_s: TwoAxisSignal, v: TwoAxisSignal, state: CascadeState,
                 gains: ControlGains, omega: float, l_filter: float, r_filter: float,
                 i_ref_proportional: TwoAxisSignal | None = None) -> tuple[TwoAxisSignal, TwoAxisSignal]:
    irp = i_ref if i_ref_proportional is None else i_ref_proportional
    _need_dq(i_ref, irp, i_s, v, state.x_i)
    r = current_loop_xy(i_ref.x1, i_ref.x2, irp.x1, irp.x2, i_s.x1, i_s.x2, v.x1, v.x2,
                        state.x_i.x1, state.x_i.x2, gains.k_ip, gains.k_ii, l_filter, r_filter, omega)
    return dq(r[0], r[1]), dq(r[2], r[3])


def modulation(v_s_ref: TwoAxisSignal, v_dc_star: float) -> TwoAxisSignal:
    if v_dc_star <= 0:
        raise ValueError("v_dc_star must be positive")
    m1, m2 = modulation_xy(v_s_ref.x1, v_s_ref.x2, v_dc_star)
    return TwoAxisSignal(m1, m2, v_s_ref.frame)


def droop_reference(p_set: float, p: float, gains: ControlGains, v_mag: float) -> tuple[float, TwoAxisSignal]:
    """Frequency (pu) and dq voltage reference of droop control."""
    return droop_frequency(p_set, p, gains.d_omega, gains.omega_star), dq(v_mag, 0.0)


def vsm_reference(p_set: float, p: float, state: ReferenceModelState, gains: ControlGains,
                  field: float) -> tuple[float, float, TwoAxisSignal]:
    """``(theta_rate_pu, omega_rate, v_hat_dq)``; ``field`` is the excitation ``M_f i_f``."""
    dw = vsm_acceleration(p_set, p, state.omega, gains.j_r, gains.d_p, gains.omega_star)
    return state.omega, dw, dq(state.omega * field, 0.0)


def matching_reference(v_dc: float, theta: float, gains: ControlGains, mu: float) -> tuple[float, TwoAxisSignal]:
    """Frequency (pu) and stationary-frame voltage reference ``mu (-sin, cos)``."""
    from .frames import alpha_beta

    w = matching_frequency(v_dc, gains.k_theta)
    return w, alpha_beta(-mu * math.sin(theta), mu * math.cos(theta))


def dvoc_reference(v_hat: TwoAxisSignal, i: TwoAxisSignal, p_set: float, q_set: float,
                   gains: ControlGains, omega_b: float = OMEGA_B) -> TwoAxisSignal:
    if v_hat.frame is not Frame.ALPHA_BETA or i.frame is not Frame.ALPHA_BETA:
        raise FrameMismatchError("dVOC runs in the stationary frame")
    if v_hat.magnitude == 0.0:
        raise ValueError("dVOC state at the origin has no defined angle")
    d1, d2 = dvoc_xy(v_hat.x1, v_hat.x2, i.x1, i.x2, p_set, q_set, gains.v_star, gains.eta,
                     gains.alpha, gains.kappa, gains.omega_star, omega_b)
    return TwoAxisSignal(d1, d2, Frame.ALPHA_BETA)


@njit(cache=True)
def _dvoc_setpoint_rk4(vh1, vh2, p_set, q_set, v_star, eta, alpha, kappa, omega_star, omega_b, dt, n):
    out = np.empty((n + 1, 2))
    out[0, 0] = vh1
    out[0, 1] = vh2
    v2s = v_star * v_star
    for k in range(n):
        ks1 = np.empty(4)
        ks2 = np.empty(4)
        a1, a2 = vh1, vh2
        for j in range(4):
            if j == 1 or j == 2:
                a1 = vh1 + 0.5 * dt * ks1[j - 1]
                a2 = vh2 + 0.5 * dt * ks2[j - 1]
            elif j == 3:
                a1 = vh1 + dt * ks1[2]
                a2 = vh2 + dt * ks2[2]
            # the bus draws what the set-point asks for at the present voltage
            i1 = (p_set * a1 + q_set * a2) / v2s
            i2 = (-q_set * a1 + p_set * a2) / v2s
            ks1[j], ks2[j] = dvoc_xy(a1, a2, i1, i2, p_set, q_set, v_star, eta, alpha, kappa, omega_star, omega_b)
        vh1 += dt / 6.0 * (ks1[0] + 2 * ks1[1] + 2 * ks1[2] + ks1[3])
        vh2 += dt / 6.0 * (ks2[0] + 2 * ks2[1] + 2 * ks2[2] + ks2[3])
        out[k + 1, 0] = vh1
        out[k + 1, 1] = vh2
    return out


def dvoc_oscillator(v0: float, gains: ControlGains, p_set: float = 0.0, q_set: float = 0.0,
                    t_end: float = 1.0, dt: float = 5e-5, omega_b: float = OMEGA_B):
    """Free dVOC oscillator on a bus that always draws the set-point current.

    Starts at ``v0`` on the alpha axis and returns ``(t, v_hat)`` with
    ``v_hat`` of shape ``(n, 2)`` in the stationary frame.
    """
    if not v0 > 0:
        raise ValueError("initial magnitude must be positive")
    n = int(round(t_end / dt))
    traj = _dvoc_setpoint_rk4(v0, 0.0, p_set, q_set, gains.v_star, gains.eta, gains.alpha, gains.kappa,
                              gains.omega_star, omega_b, dt, n)
    return np.arange(n + 1) * dt, traj
