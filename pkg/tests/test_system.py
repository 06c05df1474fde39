"""Assembled 9-bus model: initialisation, linearisation and trace invariants."""

import numpy as np
import pytest

from lowinertia.scenarios import bigstep_preset, sweep_preset
from lowinertia.solver import DeviceTrip, Event, LoadStep
from lowinertia.system import STATUS_DC_COLLAPSE, STATUS_STABLE

CONFIGS = ["allsm", "droop", "vsm", "matching", "dvoc"]


@pytest.fixture(scope="module", params=CONFIGS)
def model(request):
    m = sweep_preset(request.param).build()
    m.initialize()
    return m


def test_initial_residual(model):
    assert model.residual() <= 1e-6


def test_network_power_balance(model):
    """Converter terminal power at t = 0 equals the load-flow injection."""
    out = model.outputs(model.x0)
    for node, ch in out.items():
        if model.kinds[node] != "sm":
            assert ch["p"] == pytest.approx(model.op.injection[node].real, abs=1e-4)
            assert ch["q"] == pytest.approx(model.op.injection[node].imag, abs=1e-4)


def test_small_signal_stable(model):
    jac = model.jacobian()
    used = ~(np.all(jac == 0, axis=0) & np.all(jac == 0, axis=1))
    ev = np.linalg.eigvals(jac[np.ix_(used, used)])
    # one zero mode: shifting every angle together changes nothing
    assert (np.abs(ev) < 1e-6).sum() == 1
    assert ev[np.abs(ev) >= 1e-6].real.max() < 0


def test_rotation_equivariance(model):
    """The stationary-frame model commutes with a rotation of every ac vector."""
    x = model.x0
    th = 0.37
    c, s = np.cos(th), np.sin(th)

    def rot(v):
        y = v.copy()
        for i in model.rotating_pairs():
            y[i], y[i + 1] = c * v[i] - s * v[i + 1], s * v[i] + c * v[i + 1]
        for i in model.angle_states():
            y[i] = v[i] + th
        return y

    d_rot = model.rhs(0.0, rot(x))
    rot_d = rot(model.rhs(0.0, x))
    for i in model.angle_states():
        rot_d[i] -= th  # angle rates do not shift
    assert np.max(np.abs(d_rot - rot_d)) <= 1e-8 * max(1.0, np.max(np.abs(rot_d)))


def test_quiet_run_stays_put(model):
    r = model.run((), dt=5e-5, t_end=0.2, stride=100)
    assert r.status == STATUS_STABLE
    for name, v in r.trace.channels.items():
        if name.endswith(".omega") and model.kinds[int(name[3])] != "none":
            assert np.max(np.abs(v - 1.0)) <= 1e-6


@pytest.fixture(scope="module")
def collapse_trace():
    m = bigstep_preset("droop").build()
    m.initialize()
    return m, m.run([Event(0.5, LoadStep(7, 0.9))], dt=5e-5, t_end=3.0, stride=10)


def test_dc_saturation_bound_in_trace(collapse_trace):
    m, r = collapse_trace
    assert r.status == STATUS_DC_COLLAPSE
    for n in (2, 3):
        assert np.max(np.abs(r.trace[f"dev{n}.i_dc"])) <= m.converter.i_dc_max + 1e-12
        assert np.max(r.trace[f"dev{n}.i_tau"]) > m.converter.i_dc_max


def test_matching_frequency_lock_in_trace():
    m = bigstep_preset("matching").build()
    m.initialize()
    r = m.run([Event(0.5, LoadStep(7, 0.9))], dt=5e-5, t_end=1.5, stride=10)
    for n in (2, 3):
        k = m.gains_for(n).k_theta
        assert np.max(np.abs(r.trace[f"dev{n}.omega"] - k * r.trace[f"dev{n}.v_dc"])) <= 1e-15


def test_ac_limiter_bounds_reference():
    m = bigstep_preset("droop", ac=True).build()
    m.initialize()
    r = m.run([Event(0.5, LoadStep(7, 0.9))], dt=5e-5, t_end=2.0, stride=10)
    # the measured current settles within the limit disc apart from filter ripple
    tail = r.trace.t > 1.0
    assert np.max(r.trace["dev2.i_s"][tail]) <= m.gains_for(2).i_ac_max + 1e-3


def test_trip_zeroes_device_output():
    m = sweep_preset("droop").build()
    m.initialize()
    r = m.run([Event(0.1, DeviceTrip(2))], dt=5e-5, t_end=0.3, stride=10)
    assert np.all(r.trace["dev2.p"][r.trace.t > 0.11] == 0.0)


def test_event_validation(model):
    with pytest.raises(ValueError):
        model.run([Event(0.1, LoadStep(42, 0.1))], dt=5e-5, t_end=0.2)
    with pytest.raises(ValueError):
        model.run([Event(1.0, LoadStep(7, 0.1))], dt=5e-5, t_end=0.2)
