import json
import subprocess
import sys

import pytest

from evmarket.cli import main
from evmarket.serialize import dump_instance

from conftest import flat_instance, make_ev, make_station


@pytest.fixture
def tiny1_file(tmp_path, tiny1):
    path = tmp_path / "tiny1.json"
    dump_instance(tiny1, str(path))
    return str(path)


def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["gen", "--n-evs", "5", "--n-stations", "2", "--horizon", "10", "--seed", "3"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_solve_tiny1_vcg(tmp_path, tiny1_file):
    out = tmp_path / "out"
    assert main(["solve", tiny1_file, "--mechanism", "vcg", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["objective"] == 400
    assert summary["status"] == "optimal"
    assert summary["serviced"] == 2
    assert summary["budget"] == 0
    alloc = json.loads((out / "allocation.json").read_text())
    assert len(alloc["schedule"]) == 5
    assert (out / "pricing.csv").exists()
    assert (out / "timing.json").exists()


def test_solve_outputs_deterministic(tmp_path, tiny1_file):
    o1, o2 = tmp_path / "o1", tmp_path / "o2"
    for o in (o1, o2):
        assert main(["solve", tiny1_file, "--out", str(o)]) == 0
    for name in ("allocation.json", "summary.json", "pricing.csv"):
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes()


def test_solve_empty_instance(tmp_path):
    inst = flat_instance([make_station("L1", dem=(2, 2))], [], imbalance_unit_cost=50, horizon=2)
    path = tmp_path / "empty.json"
    dump_instance(inst, str(path))
    out = tmp_path / "out"
    assert main(["solve", str(path), "--mechanism", "coop", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["serviced"] == 0
    assert summary["budget"] == -200  # pure imbalance


def test_solve_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"stations": [')
    assert main(["solve", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "json" in capsys.readouterr().err


def test_solve_missing_key_cited(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"time_grid": {"horizon_len": 4}, "stations": [], "evs": []}')
    assert main(["solve", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "imbalance_unit_cost" in capsys.readouterr().err


def test_online_command(tmp_path, tiny1_file):
    out = tmp_path / "out"
    code = main([
        "online", tiny1_file, "--mechanism", "coop", "--incr", "0.0",
        "--clearing-points", "1", "--out", str(out),
    ])
    assert code == 0
    events = [json.loads(l) for l in (out / "events.jsonl").read_text().splitlines()]
    assert events[0]["time"] == 1
    assert set(events[0]["committed"]) == {"a1", "a2"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mode"] == "online"
    assert summary["serviced"] == 2


def test_calibrate_incr_command(tmp_path, capsys):
    code = main([
        "calibrate-incr", "--n-evs", "4", "--n-stations", "2", "--horizon", "10",
        "--elec-cost", "20", "--imbalance-cost", "1", "--max-demand", "2",
        "--n-instances", "2", "--seed", "1",
    ])
    assert code == 0
    doc = json.loads(capsys.readouterr().out.strip())
    assert 0 < doc["incr"] <= 1.0


def test_exp_command_writes_reports(tmp_path):
    out = tmp_path / "exp"
    assert main(["exp", "4", "--reps", "2", "--out", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["exp4_liars_runs.csv", "exp4_liars_summary.csv"]
    runs = (out / "exp4_liars_runs.csv").read_text().splitlines()
    assert runs[0].startswith("# schema=")
    assert len(runs) == 2 + 2 * 2  # header rows + reps x mechanisms


def test_console_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "evmarket.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "gen" in proc.stdout
