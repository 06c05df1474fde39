"""Two-level voltage source converter: dc link, dc source, switching stage, LC filter.

Per-unit conventions
--------------------
* ac quantities use peak-phase bases (see :mod:`lowinertia.frames`);
* the dc voltage base is the nominal dc voltage, so ``v_dc* = 1``;
* the dc current base is ``S_base / v_dc_base``, which makes dc and ac power
  share one base;
* the modulation index is scaled so that ``v_s = m * v_dc / 2`` holds in pu.
  The linear modulation range ``|m_SI| <= 1`` therefore becomes
  ``|m| <= v_dc_base / v_ac_base`` (about 2.99 for the default module).

Storage elements are expressed as time constants in seconds: an inductor of
``x`` pu reactance is ``x / omega_b`` seconds and likewise for capacitors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from numba import njit

from .frames import PerUnitBase, TwoAxisSignal, alpha_beta

OMEGA_B = 2.0 * math.pi * 50.0


@dataclass(frozen=True)
class ConverterParams:
    """Converter physics in pu on the converter's own rating.

    ``l_filter`` and ``c_filter`` are reactance/susceptance at base frequency;
    ``c_dc`` is the dc-link energy time constant in seconds. ``rating`` is the
    unit's apparent power as a fraction of the system base; the network sees
    the unit's currents multiplied by it.
    """

    c_dc: float = 0.09526
    g_dc: float = 0.0988
    r_filter: float = 0.0005
    l_filter: float = 0.0314
    c_filter: float = 0.188
    tau_dc: float = 0.05
    i_dc_max: float = 1.2
    v_dc_star: float = 1.0
    m_max: float = 2.988
    rating: float = 1.0  # fraction of the system base
    omega_b: float = OMEGA_B

    def __post_init__(self):
        for name in ("c_dc", "r_filter", "l_filter", "c_filter", "tau_dc", "i_dc_max",
                     "v_dc_star", "m_max", "rating", "omega_b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.g_dc < 0:
            raise ValueError("dc conductance must be >= 0")

    @classmethod
    def from_table(
        cls,
        s_module: float = 500e3,
        v_ll: float = 1e3,
        v_dc: float = 2440.0,
        c_dc: float = 0.008,
        g_dc: float = 8.3e-3,  # 0.83 S shared by 100 parallel modules
        r: float = 1e-3,
        l: float = 200e-6,
        c: float = 300e-6,
        tau_dc: float = 0.05,
        i_dc_max: float = 1.2,
        n_modules: int = 200,
        s_system: float = 100e6,
        omega_b: float = OMEGA_B,
    ) -> "ConverterParams":
        """Build pu parameters from SI module data.

        ``n_modules`` identical modules in parallel form one aggregate unit.
        Its pu values on the aggregate rating equal the module values, so
        ``n_modules`` only enters through ``rating``.
        """
        ac = PerUnitBase(s_module, v_ll, omega_b)
        rating = n_modules * s_module / s_system
        return cls(
            c_dc=c_dc * v_dc**2 / s_module,
            g_dc=g_dc * v_dc**2 / s_module,
            r_filter=ac.ohm_to_pu(r),
            l_filter=ac.henry_to_pu(l),
            c_filter=ac.farad_to_pu(c),
            tau_dc=tau_dc,
            i_dc_max=i_dc_max,
            v_dc_star=1.0,
            m_max=v_dc / ac.v_peak,
            rating=rating,
            omega_b=omega_b,
        )


@dataclass(frozen=True)
class ConverterState:
    v_dc: float
    i_tau: float
    i_s: TwoAxisSignal
    v: TwoAxisSignal


@njit(cache=True)
def saturate_dc(i_tau, i_dc_max):
    if i_tau > i_dc_max:
        return i_dc_max
    if i_tau < -i_dc_max:
        return -i_dc_max
    return i_tau


@njit(cache=True)
def switching_stage_xy(m1, m2, v_dc, is1, is2):
    """Averaged bridge: returns ``(v_s1, v_s2, i_x)``."""
    return 0.5 * m1 * v_dc, 0.5 * m2 * v_dc, 0.5 * (m1 * is1 + m2 * is2)


@njit(cache=True)
def converter_derivatives_xy(v_dc, i_tau, is1, is2, v1, v2, m1, m2, i_dc_ref, ig1, ig2,
                             c_dc, g_dc, r, l_s, c_s, tau_dc, i_dc_max):
    """Time derivatives (per second) of ``v_dc, i_tau, i_s, v``.

    ``l_s`` and ``c_s`` are the filter inductance and capacitance as time
    constants (pu / omega_b).
    """
    vs1, vs2, i_x = switching_stage_xy(m1, m2, v_dc, is1, is2)
    i_dc = saturate_dc(i_tau, i_dc_max)
    dv_dc = (i_dc - g_dc * v_dc - i_x) / c_dc
    di_tau = (i_dc_ref - i_tau) / tau_dc
    dis1 = (vs1 - r * is1 - v1) / l_s
    dis2 = (vs2 - r * is2 - v2) / l_s
    dv1 = (is1 - ig1) / c_s
    dv2 = (is2 - ig2) / c_s
    return dv_dc, di_tau, dis1, dis2, dv1, dv2


def switching_stage(m: TwoAxisSignal, v_dc: float, i_s: TwoAxisSignal) -> tuple[TwoAxisSignal, float]:
    vs1, vs2, i_x = switching_stage_xy(m.x1, m.x2, v_dc, i_s.x1, i_s.x2)
    return alpha_beta(vs1, vs2), i_x


def is_overmodulated(m: TwoAxisSignal, params: ConverterParams) -> bool:
    return m.magnitude > params.m_max


def converter_derivatives(state: ConverterState, params: ConverterParams, m: TwoAxisSignal,
                          i_dc_ref: float, i_grid: TwoAxisSignal) -> ConverterState:
    """Derivative of a converter state, returned as a ``ConverterState`` of rates."""
    p = params
    d = converter_derivatives_xy(
        state.v_dc, state.i_tau, state.i_s.x1, state.i_s.x2, state.v.x1, state.v.x2, m.x1, m.x2,
        i_dc_ref, i_grid.x1, i_grid.x2, p.c_dc, p.g_dc, p.r_filter, p.l_filter / p.omega_b,
        p.c_filter / p.omega_b, p.tau_dc, p.i_dc_max,
    )
    return ConverterState(d[0], d[1], alpha_beta(d[2], d[3]), alpha_beta(d[4], d[5]))
