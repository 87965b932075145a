import json
import subprocess
import sys

from nonadaptive_counting import cli
from nonadaptive_counting.core import GroverSchedule, ResourceLimit, query_cost
from nonadaptive_counting.harness import CSV_COLUMNS, CSV_SCHEMA_VERSION, read_records


def _json_out(capsys, argv):
    assert cli.main(argv) == 0
    return json.loads(capsys.readouterr().out)


def test_schedule_identical_across_k(capsys):
    outs = set()
    for K in ("1", "17", "2048"):
        assert cli.main(["schedule", "--n", "4096", "--k", K, "--eps", "1", "--digest"]) == 0
        outs.add(capsys.readouterr().out)
    assert len(outs) == 1
    doc = json.loads(outs.pop())
    assert doc["paddedN"] == 4096 * 2**12 and len(doc["sha256"]) == 64
    stage1 = GroverSchedule(doc["stage1"]["rotations"], doc["stage1"]["flips"])
    assert doc["queriesExact"] == query_cost(stage1).exact + sum(b["queriesExact"] for b in doc["blocks"])


def test_schedule_entries_file(tmp_path, capsys):
    path = tmp_path / "entries.csv"
    doc = _json_out(capsys, ["schedule", "--n", "8", "--pad-factor", "1", "--eps", "1", "--entries", str(path)])
    lines = path.read_text().splitlines()
    assert lines[0] == "r,t" and len(lines) == doc["entries"] + 1


def test_estimate_prints_json(capsys):
    doc = _json_out(capsys, ["estimate", "--n", "1024", "--k", "10", "--eps", "0.5", "--seed", "4"])
    assert doc["K"] == 10 and doc["paddedN"] == 1024 * 2**12 and doc["success"]
    base = _json_out(capsys, ["estimate", "--n", "1024", "--k", "10", "--algorithm", "baseline"])
    assert base["algorithm"] == "classical-baseline" and base["paddedN"] == 1024


def test_trials_write_results_and_config(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["trials", "--n", "512", "--k", "1", "9", "--eps", "1", "--trials", "2",
                     "--seed", "7", "--out", str(out)]) == 0
    assert "success" in capsys.readouterr().out
    records = read_records(out / "results.csv")
    assert len(records) == 4 and [r.seed for r in records] == [7, 8, 9, 10]
    assert (out / "results.csv").read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    echo = json.loads((out / "config.json").read_text())
    assert echo["csv_schema"] == CSV_SCHEMA_VERSION and echo["command"] == "trials"
    assert echo["practical_factor"] == 0.0012 and echo["pad_factor"] == 2**12
    assert echo["instances"] == [[512, 1], [512, 9]]


def test_flags_override_config_file(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"instances": [[256, 3]], "eps": [1.0], "delta": 0.3, "trials": 5}))
    out = tmp_path / "o"
    assert cli.main(["trials", "--config", str(conf), "--trials", "1", "--k", "5", "--out", str(out)]) == 0
    echo = json.loads((out / "config.json").read_text())
    assert echo["trials"] == 1 and echo["delta"] == 0.3 and echo["instances"] == [[256, 5]]


def test_scaling_and_calibrate_commands(tmp_path, capsys):
    out = tmp_path / "s"
    assert cli.main(["scaling", "--n", "256", "--eps", "1", "0.5", "0.25", "--out", str(out)]) == 0
    assert "max/min ratio" in capsys.readouterr().out
    assert len((out / "scaling.csv").read_text().splitlines()) == 4
    out = tmp_path / "c"
    doc = _json_out(capsys, ["calibrate", "--n", "256", "--k", "4", "--eps", "1", "--trials", "3",
                             "--steps", "1", "--pf-low", "0.01", "--out", str(out)])
    assert set(doc) == {"aConst", "practicalFactor", "lastSafe"}
    assert (out / "calibration.csv").exists()


def test_exit_codes(tmp_path, monkeypatch, capsys):
    assert cli.main(["estimate", "--n", "0"]) == 1
    assert cli.main(["estimate", "--n", "64", "--bogus"]) == 1
    assert cli.main(["estimate", "--n", "64", "--k", "65"]) == 1
    assert cli.main(["trials", "--n", "64"]) == 1  # no --out
    assert cli.main(["estimate", "--config", str(tmp_path / "missing.json")]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["estimate", "--config", str(bad)]) == 1
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["trials", "--n", "64", "--out", str(blocker / "sub")]) == 3

    def too_big(*a, **k):
        raise ResourceLimit("too many entries")

    monkeypatch.setattr(cli, "build_master_schedule", too_big)
    assert cli.main(["schedule", "--n", "64"]) == 2
    capsys.readouterr()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nonadaptive_counting", "estimate", "--n", "64", "--k", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["K"] == 2
