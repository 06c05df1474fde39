import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowinertia.frames import dq
from lowinertia.machine import (
    MachineParams,
    MachineState,
    electrical_torque,
    exciter_avr_pss,
    governor_turbine,
    initialize_machine,
    machine_derivatives,
)

OMEGA_B = 2 * math.pi * 50


def _equilibrium(p, q, v=1.0, ang=0.2, params=MachineParams()):
    v_bus = cmath.rect(v, ang)
    i_out = (complex(p, q) / v_bus).conjugate()
    op = initialize_machine(params, v_bus, i_out)
    v_dq = v_bus * cmath.exp(-1j * op.state.theta)
    return op, dq(v_dq.real, v_dq.imag)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(-0.3, 0.5), st.floats(0.95, 1.05), st.floats(-1.0, 1.0))
def test_initialisation_is_an_equilibrium(p, q, v, ang):
    params = MachineParams()
    op, v_dq = _equilibrium(p, q, v, ang, params)
    d = machine_derivatives(op.state, params, v_dq, op.p_set, op.v_ref)
    rates = d.as_array()
    assert rates[0] == pytest.approx(OMEGA_B)
    assert np.max(np.abs(rates[1:])) <= 1e-9
    # stator power matches the requested injection
    assert electrical_torque(op.state, params) == pytest.approx(p + params.r_s * abs(complex(p, q) / v) ** 2,
                                                                abs=1e-9)


def test_governor_droop():
    params = MachineParams(d_p=100.0, tau_g=5.0)
    s = MachineState(p_tau=0.5)
    rate, p_tau = governor_turbine(s, params, 0.999, p_set=0.5)
    assert p_tau == 0.5
    assert rate == pytest.approx(100.0 * 0.001 / 5.0)
    with pytest.raises(ValueError):
        governor_turbine(s, params, 0.0)


def test_rotor_accelerates_on_surplus_torque():
    params = MachineParams()
    op, v_dq = _equilibrium(0.5, 0.1)
    s = op.state
    s.p_tau += 0.1
    d = machine_derivatives(s, params, v_dq, op.p_set, op.v_ref)
    assert d.omega == pytest.approx(0.1 / (2 * params.h), rel=1e-9)


def test_exciter_limits():
    params = MachineParams()
    s = MachineState(v_reg=params.efd_max + 1.0, v_meas=0.5)
    e_fd, rates = exciter_avr_pss(s, params, 0.5, 1.0)
    assert e_fd == params.efd_max
    # regulator held at its ceiling rather than winding further up
    assert rates[1] == 0.0


def test_pss_reacts_to_speed():
    params = MachineParams()
    _, r_fast = exciter_avr_pss(MachineState(), params, 1.0, 1.001)
    _, r_nom = exciter_avr_pss(MachineState(), params, 1.0, 1.0)
    assert r_fast[2] > 0 and r_nom[2] == 0


def test_parameter_validation():
    with pytest.raises(ValueError):
        MachineParams(h=0.0)
    with pytest.raises(ValueError):
        MachineParams(r_fd=-1.0)
    t = MachineParams().with_transformer(0.01, 0.1)
    assert t.l_d == pytest.approx(MachineParams().l_d + 0.1)


def test_transient_reactance_is_physical():
    p = MachineParams()
    x_d_tr = p.l_l + p.l_ad * p.l_fd / (p.l_ad + p.l_fd)
    assert 0.2 < x_d_tr < 0.5
