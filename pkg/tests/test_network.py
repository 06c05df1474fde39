import numpy as np
import pytest

from lowinertia.network import (
    HV_BUSES,
    ConfigurationError,
    ConstantImpedanceLoad,
    DeviceSpec,
    PiLine,
    Topology,
    Transformer,
    admittance_matrix,
    build_ieee9,
    power_flow_init,
)

KINDS = [("sm", "sm", "sm"), ("sm", "droop", "droop"), ("sm", "vsm", "vsm"), ("sm", "matching", "matching"),
         ("dvoc", "dvoc", "dvoc")]


def _devices(kinds, p=0.75):
    return {n: DeviceSpec(k, p) for n, k in zip((1, 2, 3), kinds)}


@pytest.mark.parametrize("kinds", KINDS)
def test_power_flow_balance(kinds):
    topo = build_ieee9(_devices(kinds), p_load=2.25)
    op = power_flow_init(topo)
    nodes, y = admittance_matrix(topo)
    v = np.array([op.voltage[n] for n in nodes])
    s = v * np.conj(y @ v)
    idx = {n: k for k, n in enumerate(nodes)}
    for b in HV_BUSES:
        assert abs(s[idx[b]]) <= 1e-4
    for n in (2, 3):
        assert s[idx[n]].real == pytest.approx(0.75, abs=1e-4)
    # what the devices inject is what the loads and losses absorb
    assert abs(sum(op.injection.values()) - s.sum()) <= 1e-4
    assert op.mismatch <= 1e-10


def test_load_split_equally():
    topo = build_ieee9(_devices(KINDS[0]), p_load=2.4, q_load=0.9)
    assert {ld.bus for ld in topo.loads} == {5, 7, 9}
    for ld in topo.loads:
        assert ld.g == pytest.approx(0.8)
        assert ld.b == pytest.approx(-0.3)


def test_missing_device_named():
    with pytest.raises(ConfigurationError, match="node 2"):
        build_ieee9({1: "sm", 3: "droop"})


def test_unknown_kind():
    with pytest.raises(ConfigurationError):
        DeviceSpec("pll")


def test_disconnected_graph_rejected():
    topo = build_ieee9(_devices(KINDS[0]))
    lines = tuple(ln for ln in topo.lines if {ln.from_bus, ln.to_bus} not in ({7, 8}, {6, 7}))
    with pytest.raises(ConfigurationError, match="connected"):
        Topology(topo.buses, lines, topo.transformers, topo.loads, topo.devices)


def test_unknown_bus_rejected():
    topo = build_ieee9(_devices(KINDS[0]))
    with pytest.raises(ConfigurationError):
        Topology(topo.buses, topo.lines, topo.transformers, topo.loads + (ConstantImpedanceLoad(42, 0.1),))


def test_component_validation():
    with pytest.raises(ConfigurationError):
        PiLine(4, 5, 0.0, 0.1, 0.0)
    with pytest.raises(ConfigurationError):
        Transformer(1, 4, 0.01, 0.01, 0.1, 0.1, 5.0, 5.0)


def test_converter_transformers_in_series():
    topo = build_ieee9(_devices(KINDS[1]))
    sm_t, gfc_t = topo.transformer_of(1), topo.transformer_of(2)
    assert gfc_t.x > sm_t.x
    assert gfc_t.to_bus == 8 and topo.transformer_of(3).to_bus == 6


def test_load_scale():
    topo = build_ieee9(_devices(KINDS[0]), p_load=2.0).with_load_scale(3.0)
    assert sum(ld.g for ld in topo.loads) == pytest.approx(3.0)
