import csv
import dataclasses
import hashlib
import io
import json
import subprocess
import sys

import pytest

from islandctl import fixtures
from islandctl.cli import main


def run_cli(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def read_trace(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def winners(rows):
    return [(r["winner_req_owner"] or None, r["winner_resp_owner"] or None) for r in rows]


def test_feasibility_report(capsys):
    assert run_cli("feasibility", "--diameter", 10, "--delay-ms", 100) == 0
    assert "minimal delta-t: 2000 ms" in capsys.readouterr().out
    assert run_cli("feasibility", "--diameter", 1, "--delay-ms", 1) == 0
    assert "2 ms" in capsys.readouterr().out
    assert run_cli("feasibility", "--diameter", 10, "--delay-ms", 3000, "--delta-t", 60) == 0
    assert "feasible (boundary)" in capsys.readouterr().out
    assert run_cli("feasibility", "--diameter", 10, "--delay-ms", 3001, "--delta-t", 60) == 0
    assert "infeasible" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["schedule", "--scenario", "x.json", "--confidence", "1.5"],
    ["schedule", "--scenario", "x.json", "--sweep", "0.5,abc"],
    ["feasibility", "--diameter", "-1", "--delay-ms", "1"],
    ["island"],
    ["bogus"],
])
def test_usage_errors_exit_1(argv):
    assert run_cli(*argv) == 1


def test_missing_scenario_exit_1(tmp_path, capsys):
    assert run_cli("schedule", "--scenario", tmp_path / "nope.json", "--out", tmp_path) == 1
    assert "error" in capsys.readouterr().err


def test_malformed_scenario_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"buses": []}')
    assert run_cli("schedule", "--scenario", bad, "--out", tmp_path) == 1


def test_missing_schedule_exit_1(fixture_dir, tmp_path):
    assert run_cli("island", "--scenario", fixture_dir / "hil.json",
                   "--schedule", tmp_path / "none.json", "--out", tmp_path) == 1


def test_minimal_without_history_exit_1(fixture_dir, tmp_path):
    assert run_cli("schedule", "--scenario", fixture_dir / "minimal.json", "--out", tmp_path) == 1


def test_infeasible_schedule_exit_2(tmp_path, capsys):
    # every load critical and next to no storage: the night cannot be bridged
    sc = fixtures.thirteen_bus()
    assets = tuple(
        dataclasses.replace(a, critical=True) if a.kind == "load" else
        dataclasses.replace(a, soc_max_kwh=0.1) if a.kind == "storage" else a
        for a in sc.assets)
    path = tmp_path / "dark.json"
    path.write_text(sc.replace(assets=assets).dumps())
    assert run_cli("schedule", "--scenario", path, "--out", tmp_path / "o") == 2
    assert "infeasible" in capsys.readouterr().err
    assert not (tmp_path / "o" / "schedule.json").exists()


def test_schedule_outputs_and_manifest(fixture_dir, tmp_path, capsys):
    out = tmp_path / "s"
    assert run_cli("schedule", "--scenario", fixture_dir / "thirteen_bus.json",
                   "--confidence", 0.95, "--out", out) == 0
    printed = json.loads(capsys.readouterr().out)
    for name in ("schedule.json", "costs.json", "schedule.csv", "manifest.json"):
        assert (out / name).exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "schedule"
    assert man["config"]["confidence"] == 0.95
    for name, digest in man["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    reserved = json.loads((out / "schedule.json").read_text())["reserved"]
    assert max(reserved, key=lambda k: reserved[k]) == "ess12"
    assert printed["total"] == pytest.approx(json.loads((out / "costs.json").read_text())["total"])


def test_sweep_is_monotone(fixture_dir, tmp_path):
    out = tmp_path / "sw"
    assert run_cli("schedule", "--scenario", fixture_dir / "thirteen_bus.json",
                   "--sweep", "0.5,0.9,0.95,0.99", "--out", out) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [r["confidence"] for r in rows] == ["0.5", "0.9", "0.95", "0.99"]
    totals = [float(r["total"]) for r in rows]
    reserved = [float(r["reserved_kwh"]) for r in rows]
    assert totals == sorted(totals)
    assert reserved == sorted(reserved)
    assert (out / "schedule_0.99.json").exists()


def test_blackstart_trace(fixture_dir, tmp_path):
    out = tmp_path / "bs"
    assert run_cli("island", "--scenario", fixture_dir / "blackstart.json",
                   "--schedule", fixture_dir / "blackstart_schedule.json", "--out", out) == 0
    rows = read_trace(out / "trace.csv")
    w = winners(rows)
    assert w[:9] == [("gfr", "ess_cheap")] + [(f"load{i}", "ess_cheap") for i in range(1, 9)]
    assert all(r["applied"] == "0" for r in rows[9:])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["activations"] == 9


def test_hil_trace(fixture_dir, tmp_path):
    out = tmp_path / "hil"
    assert run_cli("island", "--scenario", fixture_dir / "hil.json",
                   "--schedule", fixture_dir / "hil_schedule.json", "--delta-t", 5,
                   "--steps", 6, "--out", out) == 0
    assert winners(read_trace(out / "trace.csv")) == [
        ("gfr", "pv"), ("ctrl_load", "ess"), ("gfr", "pv"), ("gfr", "ess"), ("ess", None), ("ess", None)]


def test_reruns_are_byte_identical(fixture_dir, tmp_path):
    traces = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run_cli("island", "--scenario", fixture_dir / "hil.json",
                       "--schedule", fixture_dir / "hil_schedule.json", "--seed", 3,
                       "--noise-kw", 0.05, "--out", out) == 0
        traces.append((out / "trace.csv").read_bytes())
    assert traces[0] == traces[1]


def test_infeasible_interval_exit_2_unless_forced(fixture_dir, tmp_path, capsys):
    args = ["island", "--scenario", fixture_dir / "hil.json",
            "--schedule", fixture_dir / "hil_schedule.json", "--delay-ms", 5000, "--steps", 2]
    assert run_cli(*args, "--out", tmp_path / "x") == 2
    assert "--force" in capsys.readouterr().err
    assert not (tmp_path / "x" / "trace.csv").exists()
    assert run_cli(*args, "--out", tmp_path / "y", "--force") == 0
    assert (tmp_path / "y" / "trace.csv").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "islandctl", "feasibility", "--diameter", "2",
                          "--delay-ms", "10"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "40 ms" in res.stdout
