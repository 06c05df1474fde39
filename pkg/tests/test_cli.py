import math

import numpy as np
import pytest

from lowinertia.cli import main, write_csv
from lowinertia.metrics import MetricsResult, Stability
from lowinertia.reduced import StudyPoint
from lowinertia.solver import SimulationTrace


def test_empty_selection_is_header_only(tmp_path):
    p = tmp_path / "t.csv"
    write_csv(SimulationTrace(np.linspace(0, 1, 5), {}), str(p))
    assert p.read_bytes() == b"t[s]\n"


def test_trace_shape_and_format(tmp_path):
    t = np.linspace(0, 1, 7)
    tr = SimulationTrace(t, {"a": np.sin(t), "b": np.full(7, 1 / 3)}, {"a": "pu", "b": "pu/s"})
    p = tmp_path / "t.csv"
    write_csv(tr, str(p))
    raw = p.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert len(lines) == 8
    assert lines[0] == "t[s],a[pu],b[pu/s]"
    assert all(len(row.split(",")) == 3 for row in lines)
    assert lines[1].split(",")[2] == "0.333333333"


def test_metrics_and_curve_csv(tmp_path):
    p = tmp_path / "m.csv"
    write_csv([MetricsResult(0.2, 0.001, 0.004, Stability.STABLE, 0.0)], str(p))
    rows = p.read_text().splitlines()
    assert rows[0].startswith("dp[pu],nadir[pu],rocof[pu/s]")
    assert rows[1].endswith(",Stable")
    q = tmp_path / "c.csv"
    write_csv([StudyPoint(1.0, 100.0, 100.0)], str(q))
    assert q.read_text() == "nu[-],rocof[%],nadir[%]\n1,100,100\n"
    with pytest.raises(TypeError):
        write_csv([1, 2], str(q))


def test_io_error_names_path(tmp_path):
    bad = tmp_path / "missing" / "x.csv"
    with pytest.raises(OSError, match="missing"):
        write_csv(SimulationTrace(np.zeros(1), {}), str(bad))


def test_run_exit_codes_and_determinism(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "ieee9-droop-bigstep", "--t-end", "2", "--out", str(out)]) == 2
    assert main(["run", "ieee9-matching-bigstep", "--t-end", "2", "--out", str(out)]) == 0
    first = (out / "ieee9-matching-bigstep_trace.csv").read_bytes()
    assert main(["run", "ieee9-matching-bigstep", "--t-end", "2", "--out", str(out)]) == 0
    assert (out / "ieee9-matching-bigstep_trace.csv").read_bytes() == first


def test_bad_scenario_exit(tmp_path, capsys):
    f = tmp_path / "s.yaml"
    f.write_text("schema: 1\ndevices: {1: sm, 3: droop}\n")
    assert main(["run", str(f), "--out", str(tmp_path)]) == 1
    assert "node 2" in capsys.readouterr().err


def test_reduced_study_command(tmp_path, capsys):
    assert main(["reduced-study", "--pmax", "inf", "--pmax", "1.2", "--out", str(tmp_path)]) == 0
    inf = np.loadtxt(tmp_path / "reduced_pmax_inf.csv", delimiter=",", skiprows=1)
    sat = np.loadtxt(tmp_path / "reduced_pmax_1.2.csv", delimiter=",", skiprows=1)
    assert inf.shape == sat.shape == (20, 3)
    assert inf[0, 1] == 100 and sat[-1, 2] > inf[-1, 2]


def test_tuning_command(capsys):
    assert main(["tuning", "--dp", "100"]) == 0
    assert "d_omega=0.01 D_p=100 k_dc=100 eta=0.01" in capsys.readouterr().out


def test_sweep_command(tmp_path):
    assert main(["sweep", "ieee9-dvoc", "--dp-start", "0.2", "--dp-end", "0.21", "--dp-step", "0.007",
                 "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "ieee9-dvoc_sweep.csv").read_text().splitlines()
    assert len(rows) == 3
    assert [float(r.split(",")[0]) for r in rows[1:]] == [0.2, 0.207]


def test_presets_listed(capsys):
    assert main(["presets"]) == 0
    assert "ieee9-allsm" in capsys.readouterr().out


def test_pmax_parser():
    from lowinertia.cli import _pmax

    assert math.isinf(_pmax("inf")) and _pmax("1.2") == 1.2
