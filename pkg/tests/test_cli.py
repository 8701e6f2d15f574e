import csv
import json
import os
import subprocess
import sys

import pytest

from tarmac import harness
from tarmac.cli import main
from tarmac.config import RunConfig
from tarmac.harness import SUMMARY_COLUMNS, run_sweep, write_run
from tarmac.presets import PRESETS

SMALL = ["--set", "rows=3", "--set", "cols=3", "--set", "sim_end_us=5s", "--set", "traffic_duration_us=4s"]


def test_simulate_writes_three_files(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", *SMALL, "--out", str(out)]) == 0
    for name in ("summary.csv", "tx_log.csv", "attack_report.csv"):
        assert (out / name).is_file()
    rows = list(csv.DictReader(open(out / "summary.csv")))
    assert len(rows) == 1 and tuple(rows[0]) == SUMMARY_COLUMNS
    assert rows[0]["rows"] == "3"


def test_default_scenario_end_to_end(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--out", str(out)]) == 0
    row = next(csv.DictReader(open(out / "summary.csv")))
    assert row["generated"] == "20000" and row["transmissions"] == "40000"


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, str(tmp_path))
    assert main(["simulate", *SMALL, "--set", "output_dir=r1"]) == 0
    assert (tmp_path / "r1" / "summary.csv").is_file()


def test_config_error_exit_code(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--set", "slots=0", "--out", str(out)]) == 1
    assert "slots" in capsys.readouterr().err
    assert not out.exists()
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 1


def test_unwritable_output_is_runtime_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", *SMALL, "--out", str(blocker / "sub")]) == 2


def test_usage_error_is_config_error():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--bogus"])
    assert exc.value.code == 1


def test_trace_flag(tmp_path):
    trace = tmp_path / "trace.txt"
    assert main(["simulate", *SMALL, "--out", str(tmp_path / "r"), "--trace", str(trace)]) == 0
    first = trace.read_text().splitlines()[0].split()
    assert len(first) == 4 and first[2] in {"scheduled-send", "timer", "traffic-arrival", "tx-end"}


def test_preset_sizes():
    assert len(PRESETS["fig-busslots"].configs()) == 16
    cfgs = PRESETS["fig-busslots"].configs(seeds=(1, 2, 3))
    assert len(cfgs) == 48 and {c.seed for c in cfgs} == {1, 2, 3}
    assert len(PRESETS["fig-busptn"].configs()) == 6
    assert len(PRESETS["fig-intrusion1"].configs()) == 12
    assert len({c.digest() for c in cfgs}) == 48


def test_manifest_and_help_list_axes(capsys):
    assert main(["presets"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert {p["name"] for p in doc["presets"]} == set(PRESETS)
    assert doc["defaults"]["sim_end_us"] == 400_000_000
    busslots = next(p for p in doc["presets"] if p["name"] == "fig-busslots")
    assert busslots["axes"] == {"slots": [1, 2, 4, 8], "period_us": [250000, 500000, 1000000, 2000000]}
    with pytest.raises(SystemExit):
        main(["--help"])
    text = capsys.readouterr().out
    for p in PRESETS.values():
        assert p.name in text
        for key, values in p.axes:
            assert key in text
            for v in values:
                assert str(v) in text
    assert "range_m = 40.0" in text and "bitrate_bps = 2000000" in text


def test_single_point_sweep_equals_single_run(tmp_path):
    cfg = RunConfig(rows=3, cols=3, sim_end_us=5_000_000, traffic_duration_us=4_000_000)
    single = write_run(cfg, tmp_path / "one")
    swept = run_sweep([cfg], tmp_path / "sweep")
    assert swept.rows == [single]
    assert (tmp_path / "one" / "tx_log.csv").read_bytes() == (
        tmp_path / "sweep" / "runs" / cfg.digest() / "tx_log.csv"
    ).read_bytes()


def test_sweep_failure_keeps_partial_results(tmp_path, monkeypatch):
    cfgs = [RunConfig(rows=2, cols=2, sim_end_us=2_000_000, seed=s) for s in (1, 2, 3)]
    real = harness.run_simulation

    def flaky(cfg, trace=None):
        if cfg.seed == 2:
            raise RuntimeError("boom")
        return real(cfg, trace)

    monkeypatch.setattr(harness, "run_simulation", flaky)
    res = run_sweep(cfgs, tmp_path)
    assert len(res.rows) == 1 and res.failed[0][0].seed == 2
    rows = list(csv.DictReader(open(res.path)))
    assert [r["seed"] for r in rows] == ["1"]


def test_sweep_command(tmp_path, monkeypatch):
    from tarmac import presets
    tiny = presets.Preset("tiny", "test", {"rows": 2, "cols": 2, "sim_end_us": 2_000_000}, (("slots", (1, 2)),))
    monkeypatch.setitem(presets.PRESETS, "tiny", tiny)
    assert main(["sweep", "--preset", "tiny", "--seeds", "2", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert [(r["slots"], r["seed"]) for r in rows] == [("1", "1"), ("1", "2"), ("2", "1"), ("2", "2")]
    agg = list(csv.DictReader(open(tmp_path / "aggregate.csv")))
    assert [(r["slots"], r["seeds"]) for r in agg] == [("1", "2"), ("2", "2")]
    assert "seed" not in agg[0]


def test_aggregate_mean_and_ci():
    # values 1, 2, 3: mean 2, stdev 1, t(0.975, df=2) = 4.303, so half-width 4.303/sqrt(3)
    base = {c: "1" for c in harness.SUMMARY_COLUMNS}
    rows = []
    for seed, v in zip("123", ("1", "2", "3")):
        rows.append({**base, "seed": seed, "delivery_ratio": v, "occupancy": ""})
    (agg,) = harness.aggregate_rows(rows)
    assert agg["seeds"] == "3"
    assert float(agg["delivery_ratio_mean"]) == 2.0
    assert float(agg["delivery_ratio_ci95"]) == pytest.approx(4.303 / 3 ** 0.5, abs=1e-9)
    assert agg["occupancy_mean"] == "" and agg["occupancy_ci95"] == ""


def test_aggregate_single_seed_has_no_ci():
    row = {c: "1" for c in harness.SUMMARY_COLUMNS}
    (agg,) = harness.aggregate_rows([row])
    assert agg["delivery_ratio_mean"] == "1.0" and agg["delivery_ratio_ci95"] == ""


def test_attack_command(tmp_path, capsys):
    out = tmp_path / "r"
    main(["simulate", *SMALL, "--out", str(out)])
    capsys.readouterr()
    code = main(["attack", "--log", str(out / "tx_log.csv"), "--rows", "3", "--cols", "3",
                 "--out", str(tmp_path / "a.csv")])
    assert code == 0
    assert "time correlation" in capsys.readouterr().out
    assert (tmp_path / "a.csv").read_text().startswith("key,value")
    assert main(["attack", "--log", str(out / "tx_log.csv"), "--rows", "2", "--cols", "2"]) == 1


def test_console_script_runs(tmp_path):
    env = dict(os.environ, TARMAC_OUTPUT_ROOT=str(tmp_path))
    proc = subprocess.run([sys.executable, "-m", "tarmac.cli", "presets"], capture_output=True, text=True, env=env)
    assert proc.returncode == 0 and '"fig-mp-adapt"' in proc.stdout
