import csv
import json
from pathlib import Path

import pytest

from fefet_tdimc import config as cfgmod
from fefet_tdimc.cli import main
from fefet_tdimc.config import ExperimentConfig
from fefet_tdimc.experiments import ensure_presets, run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def read_summary(d):
    with open(d / "summary.csv", newline="") as fh:
        return dict(list(csv.reader(fh))[1:])


def read_csv(p):
    with open(p, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("name", ["truth_table_and", "truth_table_xor", "boolean_logic", "full_adder",
                                  "disturb_check", "mls_sweep", "fit_parameters"])
def test_deterministic_experiments_pass(name, tmp_path):
    assert main(["run", name, "--out", str(tmp_path)]) == 0
    s = read_summary(tmp_path)
    assert s["passed"] == "1"
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["passed"] is True and m["experiment"] == name
    assert set(m["versions"]) == {"fefet_tdimc", "python", "numpy", "scipy"}
    assert "presets" in m["resolved_config"]
    for a in m["artifacts"]:
        assert (tmp_path / a).exists()


def test_truth_table_cases_file(tmp_path):
    main(["run", "truth_table_and", "--out", str(tmp_path)])
    rows = read_csv(tmp_path / "cases.csv")
    assert len(rows) == 64 and all(r["pass"] == "1" for r in rows)
    assert {r["thermometer"] for r in rows} == {"000", "100", "110", "111"}
    assert all(len(r["total_delay_ps"].split(".")[1]) == 3 for r in rows)


def test_disturb_zero(tmp_path):
    main(["run", "disturb_check", "--out", str(tmp_path)])
    assert read_summary(tmp_path)["disturbed_devices"] == "0"


def test_mls_sweep_shape(tmp_path):
    assert main(["sweep", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "cases.csv")
    wl = sorted({float(r["v_wl_V"]) for r in rows})
    assert len(wl) == 41 and wl[0] == -0.2 and wl[-1] == 1.8
    vts = [float(r["vt_V"]) for r in rows[:: len(wl)]]
    assert vts == sorted(vts)
    assert float(read_summary(tmp_path)["finest_gap_at_v_read_ps"]) <= 100


def test_byte_identical_reruns(tmp_path):
    args = ["run", "monte_carlo", "--config", str(CONFIGS / "monte_carlo.toml"), "--trials", "20000"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for f in ("cases.csv", "summary.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["config_sha256"] == mb["config_sha256"]


def test_seed_changes_results(tmp_path):
    args = ["run", "monte_carlo", "--config", str(CONFIGS / "monte_carlo.toml"), "--trials", "10000"]
    main(args + ["--out", str(tmp_path / "a"), "--seed", "1"])
    main(args + ["--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "cases.csv").read_bytes() != (tmp_path / "b" / "cases.csv").read_bytes()


def test_fitted_config_round_trip_reproduces(tmp_path):
    assert main(["fit", "--out", str(tmp_path / "fit")]) == 0
    fitted = tmp_path / "fit" / "fitted.toml"
    cfg = cfgmod.load(fitted)
    assert set(cfg.presets) == {"and", "xor"}
    main(["run", "truth_table_xor", "--out", str(tmp_path / "a")])
    main(["run", "truth_table_xor", "--config", str(fitted), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "cases.csv").read_bytes() == (tmp_path / "b" / "cases.csv").read_bytes()


def test_failing_case_sets_exit_status(tmp_path):
    # presets with the TDC ladder shifted a full step: every level decodes wrong
    cfg = ensure_presets(ExperimentConfig())
    cfg.presets["and"].tdc_shift += cfg.presets["and"].tdc_step
    cfg.experiment.name = "truth_table_and"
    out = run_experiment(cfg, tmp_path)
    assert not out.passed and out.exit_code == 1
    assert read_summary(tmp_path)["passed"] == "0"
    p = tmp_path / "bad.toml"
    cfg.save(p)
    assert main(["run", "truth_table_and", "--config", str(p), "--out", str(tmp_path / "c")]) == 1


def test_config_errors_exit_2(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text("[device]\nvt_mni = 0.2\n")
    assert main(["run", "full_adder", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "c.toml:2" in capsys.readouterr().err
    assert main(["run", "monte_carlo", "--trials", "0", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["run", "nonsense"])


def test_report(tmp_path, capsys):
    main(["run", "full_adder", "--out", str(tmp_path / "fa")])
    main(["run", "truth_table_and", "--out", str(tmp_path / "tt")])
    capsys.readouterr()
    assert main(["report", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "full_adder" in text and "truth_table_and" in text
    assert main(["report", "--out", str(tmp_path / "nothing")]) == 2


def test_calibrate_experiment(tmp_path):
    assert main(["run", "calibrate", "--config", str(CONFIGS / "calibrate.toml"), "--out", str(tmp_path)]) == 0
    s = read_summary(tmp_path)
    assert s["cells_converged"] == "9"
    assert float(s["tdl_range_after_ps"]) <= 100
    assert (tmp_path / "trajectory.csv").exists()
