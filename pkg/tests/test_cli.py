import json
import math

import pytest
from conftest import scenario_dict

from chirploc import io
from chirploc.cli import main, run_seed

V = 299_792_458.0


def run(args):
    code = main([str(a) for a in args])
    return code


def test_simulate_two_gateways(write_scenario, tmp_path, capsys):
    path = write_scenario(scenario_dict())
    out = tmp_path / "out"
    assert run(["simulate", path, "--out", out, "--dump-iq", "--dump-dps"]) == 0
    rows = io.read_rows(out / "result.csv")
    assert len(rows) == 1 and rows[0]["row"] == "pair"
    assert abs(rows[0]["d_hat"] - 100.0) <= V / 20e6
    assert (out / "iq" / "A.cf32").exists() and (out / "iq" / "B.json").exists()
    assert len(io.read_dps_csv(out / "dps" / "A.csv", 20e6)) == 1999
    assert json.loads((out / "result.json").read_text())["position_m"] is None
    assert "A-B" in capsys.readouterr().out


def test_global_flags_before_subcommand(write_scenario, tmp_path):
    path = write_scenario(scenario_dict())
    assert run(["--out", tmp_path / "g", "--refine-peak", "simulate", path]) == 0
    data = json.loads((tmp_path / "g" / "result.json").read_text())
    assert data["pairs"][0]["k_refined"] is not None


def test_simulate_ambiguous_rate_exit_1(write_scenario, capsys):
    path = write_scenario(scenario_dict(f_s_hz=62.5e3))
    assert run(["simulate", path]) == 1
    err = capsys.readouterr().err
    assert "receiver.f_s_hz" in err and "f_s > BW" in err


def test_simulate_missing_position_exit_1(write_scenario, capsys):
    doc = scenario_dict()
    del doc["scene"]["gateways"][0]["pos_m"]
    assert run(["simulate", write_scenario(doc)]) == 1
    assert "scene.gateways.0.pos_m" in capsys.readouterr().err


def test_simulate_pipeline_failure_exit_2(write_scenario, tmp_path, capsys):
    # a capture window with no signal at all cannot be correlated
    doc = scenario_dict(capture_start_s=0.5, capture_span_s=1e-4)
    assert run(["simulate", write_scenario(doc), "--out", tmp_path]) == 2
    assert "pair ('A', 'B')" in capsys.readouterr().err


def test_simulate_is_byte_deterministic(write_scenario, tmp_path):
    doc = scenario_dict()
    doc["channel"] = {"snr_db": 15.0}
    path = write_scenario(doc)
    run(["simulate", path, "--out", tmp_path / "a"])
    run(["simulate", path, "--out", tmp_path / "b"])
    for name in ("result.csv", "result.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_rows_and_default_seed(write_scenario, tmp_path):
    path = write_scenario(scenario_dict())
    out = tmp_path / "s"
    assert run(["sweep", path, "--var", "distance_difference", "--from", -300, "--to", 300,
                "--steps", 5, "--out", out, "--plot"]) == 0
    rows = io.read_rows(out / "sweep.csv")
    assert [r["sweep_value"] for r in rows] == [-300.0, -150.0, 0.0, 150.0, 300.0]
    assert all(r["seed"] == 0 and r["method"] == "phase" for r in rows)
    assert max(abs(r["error_m"]) for r in rows) <= V / 20e6
    svg = (out / "sweep.svg").read_text()
    assert svg.startswith("<svg") or svg.startswith("<?xml")


def test_sweep_seeds_and_thread_independence(write_scenario, tmp_path, monkeypatch):
    doc = scenario_dict()
    doc["channel"] = {"snr_db": 5.0}
    path = write_scenario(doc)
    args = ["sweep", path, "--var", "snr", "--values", "0,10,20", "--seeds", "3,4"]
    monkeypatch.setenv("CHIRPLOC_THREADS", "1")
    assert run(args + ["--out", tmp_path / "one"]) == 0
    monkeypatch.setenv("CHIRPLOC_THREADS", "4")
    assert run(args + ["--out", tmp_path / "four"]) == 0
    one = (tmp_path / "one" / "sweep.csv").read_bytes()
    assert one == (tmp_path / "four" / "sweep.csv").read_bytes()
    rows = io.read_rows(tmp_path / "one" / "sweep.csv")
    assert [(r["sweep_value"], r["seed"]) for r in rows] == [
        (0.0, 3), (0.0, 4), (10.0, 3), (10.0, 4), (20.0, 3), (20.0, 4)]


def test_run_seed_isolated():
    assert run_seed(0, 0) != run_seed(0, 1) != run_seed(1, 0)
    assert run_seed(5, 2) == run_seed(5, 2)


def test_sweep_range_from_scenario(write_scenario, tmp_path):
    doc = scenario_dict(sweep={"variable": "clock_offset", "values": [0.0, 1e-6]})
    assert run(["sweep", write_scenario(doc), "--out", tmp_path]) == 0
    rows = io.read_rows(tmp_path / "sweep.csv")
    assert rows[1]["error_m"] == pytest.approx(1e-6 * V, abs=V / 20e6)


@pytest.mark.parametrize(
    "extra",
    [
        ["--var", "bogus", "--from", 0, "--to", 1, "--steps", 2],
        ["--var", "snr", "--from", 1, "--to", 1, "--steps", 3],
        ["--var", "snr", "--values", "1,3,2"],
        ["--var", "snr", "--from", 1, "--to", 2],
        ["--var", "snr"],
        ["--var", "f_s", "--values", "100000,20000000"],
    ],
)
def test_sweep_rejects(write_scenario, extra, capsys):
    assert run(["sweep", write_scenario(scenario_dict())] + extra) == 1
    assert "error" in capsys.readouterr().err


def test_baseline_rssi_zero_error(write_scenario, tmp_path):
    assert run(["baseline", write_scenario(scenario_dict()), "--which", "rssi", "--out", tmp_path]) == 0
    rows = io.read_rows(tmp_path / "baseline_rssi.csv")
    assert len(rows) == 2 and max(abs(r["error_m"]) for r in rows) < 1e-6


def test_baseline_tdoa_bounded(write_scenario, tmp_path):
    doc = scenario_dict(tdoa={"resolution_s": 1e-6, "trials": 500})
    assert run(["baseline", write_scenario(doc), "--which", "tdoa", "--out", tmp_path]) == 0
    rows = io.read_rows(tmp_path / "baseline_tdoa.csv")
    assert len(rows) == 500
    assert max(abs(r["error_m"]) for r in rows) <= 1e-6 * V


def test_baseline_matched_filter_table(write_scenario, tmp_path):
    doc = scenario_dict(matched_filter={"grid_points": 8})
    doc["chirp"]["sf"] = 9
    assert run(["baseline", write_scenario(doc), "--which", "matched_filter", "--out", tmp_path]) == 0
    rows = io.read_rows(tmp_path / "baseline_matched_filter.csv")
    assert len(rows) == 8
    for r in rows:
        assert abs(abs(r["peak"]) - abs(math.cos(r["sweep_value"]))) < 0.1
    assert len({r["K"] for r in rows if abs(math.cos(r["sweep_value"])) > 0.5}) == 1


def test_baseline_unknown_exit_1(write_scenario):
    assert run(["baseline", write_scenario(scenario_dict()), "--which", "gps"]) == 1


def test_module_entry_point(write_scenario, tmp_path):
    import subprocess
    import sys

    path = write_scenario(scenario_dict(f_s_hz=1e5))
    proc = subprocess.run([sys.executable, "-m", "chirploc.cli", "simulate", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 1
