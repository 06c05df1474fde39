import math

import pytest
import yaml

from lowinertia.network import DeviceSpec
from lowinertia.scenarios import (
    PRESETS,
    InitializationError,
    Scenario,
    ScenarioError,
    from_dict,
    load_scenario,
    save_scenario,
    to_dict,
)
from lowinertia.solver import DeviceTrip, Event, LoadStep


def test_allsm_preset():
    s = load_scenario("ieee9-allsm")
    assert [d.kind for d in s.devices.values()] == ["sm"] * 3
    assert s.p_load == 2.0


def test_droop_bigstep_preset():
    s = load_scenario("ieee9-droop-bigstep")
    assert s.p_load == 2.25
    assert s.events == (Event(0.5, LoadStep(7, 0.9)),)
    assert s.limiters == {"dc_sat": True, "ac_limiter": False, "setpoint_limiter": False}
    assert s.tau_g == 5.0


def test_catalog_covers_every_case_study():
    names = set(PRESETS)
    assert "ieee9-allsm" in names
    for kind in ("droop", "vsm", "matching", "dvoc"):
        assert {f"ieee9-{kind}", f"ieee9-{kind}-bigstep", f"ieee9-{kind}-bigstep-ac",
                f"ieee9-{kind}-bigstep-ac-sp", f"ieee9-{kind}-bigstep-ac-tg1",
                f"ieee9-{kind}-loss-of-sm", f"ieee9-allgfc-{kind}-bigstep"} <= names
    for name, make in PRESETS.items():
        assert make().name == name
        make().validate()


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_round_trip(name, tmp_path):
    s = PRESETS[name]()
    path = tmp_path / "s.yaml"
    save_scenario(s, str(path))
    assert load_scenario(str(path)) == s
    assert from_dict(to_dict(s)) == s


def test_missing_device_names_node():
    d = to_dict(load_scenario("ieee9-droop-bigstep"))
    del d["devices"][2]
    with pytest.raises(ScenarioError) as err:
        from_dict(d)
    assert any("node 2" in e for e in err.value.errors)


def test_errors_listed_exhaustively():
    d = to_dict(load_scenario("ieee9-droop-bigstep"))
    d["devices"][2] = {"kind": "pll"}
    d["limiters"]["ac_limiter"] = "yes"
    d["limiters"]["magic"] = True
    d["events"].append({"time": 99.0, "type": "load_step", "bus": 3, "dp": 0.1})
    d["gains"] = {"all": {"k_xyz": 1.0}}
    d["colour"] = "blue"
    with pytest.raises(ScenarioError) as err:
        from_dict(d)
    text = " | ".join(err.value.errors)
    for needle in ("node 2", "ac_limiter", "magic", "beyond t_end", "unknown bus 3", "k_xyz", "colour"):
        assert needle in text


def test_schema_version_checked():
    d = to_dict(load_scenario("ieee9-allsm"))
    d["schema"] = 99
    with pytest.raises(ScenarioError, match="schema"):
        from_dict(d)


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("schema: 1\ndevices:\n  1: {kind: sm\n  2: droop\n")
    with pytest.raises(ScenarioError, match="line"):
        load_scenario(str(path))


def test_missing_file():
    with pytest.raises(ScenarioError, match="no such file"):
        load_scenario("/nonexistent/scenario.yaml")


def test_short_device_syntax(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(yaml.safe_dump({"schema": 1, "devices": {1: "sm", 2: "dvoc", 3: "dvoc"},
                                    "events": [{"time": 0.5, "type": "trip", "device": 3}]}))
    s = load_scenario(str(path))
    assert s.devices[2] == DeviceSpec("dvoc")
    assert s.events == (Event(0.5, DeviceTrip(3)),)


def test_frequency_source():
    assert load_scenario("ieee9-droop").frequency_device() == 1
    # the machine at node 1 is tripped, so a converter is measured instead
    assert load_scenario("ieee9-vsm-loss-of-sm").frequency_device() == 2
    assert load_scenario("ieee9-allgfc-dvoc-bigstep").frequency_device() == 1


def test_step_and_load_variants():
    s = load_scenario("ieee9-matching").with_step(0.55).replace_load(2.1, bus=5)
    assert s.events == (Event(0.5, LoadStep(5, 0.55)),)
    assert s.p_load == 2.1
    t = Scenario("x", {1: DeviceSpec("sm"), 2: DeviceSpec("sm"), 3: DeviceSpec("sm")}).with_step(0.3)
    assert t.events == (Event(0.5, LoadStep(7, 0.3)),)


def test_gain_overrides_apply_per_node():
    s = Scenario("x", {1: DeviceSpec("sm"), 2: DeviceSpec("droop"), 3: DeviceSpec("droop")},
                 gains={"all": {"k_dc": 50.0}, 3: {"k_dc": 20.0}})
    assert s.gains_for(2).k_dc == 50.0
    assert s.gains_for(3).k_dc == 20.0


def test_refuses_to_run_off_equilibrium(monkeypatch):
    from lowinertia import system

    monkeypatch.setattr(system.SystemModel, "residual", lambda self, x=None: 1e-3)
    with pytest.raises(InitializationError):
        load_scenario("ieee9-allsm").execute()


def test_execute_allsm_baseline():
    _, m = load_scenario("ieee9-allsm").execute()
    assert m.stable.value == "Stable"
    assert 0 < m.nadir < 0.01 and 0 < m.rocof < 0.05
    assert not math.isnan(m.rocof)
