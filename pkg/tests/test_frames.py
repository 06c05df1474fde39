import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lowinertia.frames import (
    Frame,
    FrameMismatchError,
    PerUnitBase,
    RotationMatrix2,
    alpha_beta,
    clarke,
    dq,
    instantaneous_power,
    inverse_clarke,
    inverse_park,
    park,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
angle = st.floats(-20.0, 20.0, allow_nan=False)


@given(finite, finite, angle)
def test_park_round_trip(a, b, th):
    v = alpha_beta(a, b)
    back = inverse_park(park(v, th), th)
    scale = max(1.0, abs(a), abs(b))
    assert abs(back.x1 - a) <= 1e-12 * scale * 4
    assert abs(back.x2 - b) <= 1e-12 * scale * 4


@given(finite, finite)
def test_clarke_round_trip_balanced(a, b):
    c = -a - b
    v = clarke(a, b, c)
    ra, rb, rc = inverse_clarke(v)
    scale = max(1.0, abs(a), abs(b))
    assert max(abs(ra - a), abs(rb - b), abs(rc - c)) <= 1e-12 * scale * 4


def test_clarke_amplitude_invariant():
    th = 0.3
    v = clarke(math.cos(th), math.cos(th - 2 * math.pi / 3), math.cos(th + 2 * math.pi / 3))
    assert v.magnitude == pytest.approx(1.0, abs=1e-14)
    assert math.atan2(v.x2, v.x1) == pytest.approx(th, abs=1e-14)


def test_clarke_drops_zero_sequence():
    v = clarke(1.0, 1.0, 1.0)
    assert v.x1 == pytest.approx(0.0, abs=1e-15) and v.x2 == pytest.approx(0.0, abs=1e-15)


@given(finite, finite, angle)
def test_rotation_preserves_norm(a, b, th):
    v = alpha_beta(a, b)
    r = RotationMatrix2(th).apply(v)
    assert r.magnitude == pytest.approx(v.magnitude, rel=1e-12, abs=1e-12)
    m = RotationMatrix2(th).matrix
    assert np.allclose(m @ m.T, np.eye(2), atol=1e-14)


def test_frames_do_not_mix():
    with pytest.raises(FrameMismatchError):
        alpha_beta(1, 0) + dq(1, 0)
    with pytest.raises(FrameMismatchError):
        park(dq(1, 0), 0.1)
    with pytest.raises(FrameMismatchError):
        inverse_park(alpha_beta(1, 0), 0.1)


@given(finite, finite, finite, finite, angle)
def test_power_is_frame_invariant(v1, v2, i1, i2, th):
    p, q = instantaneous_power(alpha_beta(v1, v2), alpha_beta(i1, i2))
    pd, qd = instantaneous_power(park(alpha_beta(v1, v2), th), park(alpha_beta(i1, i2), th))
    scale = max(1.0, abs(v1 * i1) + abs(v2 * i2) + abs(v1 * i2) + abs(v2 * i1))
    assert abs(p - pd) <= 1e-12 * scale * 8
    assert abs(q - qd) <= 1e-12 * scale * 8


def test_inductive_load_draws_positive_reactive_power():
    # current lagging the voltage by 90 degrees
    p, q = instantaneous_power(alpha_beta(1.0, 0.0), alpha_beta(0.0, -1.0))
    assert p == pytest.approx(0.0) and q == pytest.approx(1.0)


def test_per_unit_base():
    b = PerUnitBase(s_base=500e3, v_base=1000.0)
    assert b.z_base == pytest.approx(2.0)
    assert b.ohm_to_pu(1.0) == pytest.approx(0.5)
    # peak-phase power base reproduces the three-phase base
    assert 1.5 * b.v_peak * b.i_peak == pytest.approx(b.s_base)
    with pytest.raises(ValueError):
        PerUnitBase(0.0, 1.0)


def test_signal_tags():
    assert alpha_beta(1, 2).frame is Frame.ALPHA_BETA
    assert dq(1, 2).frame is Frame.DQ
    assert (dq(1, 2) * 2.0).as_array().tolist() == [2.0, 4.0]
