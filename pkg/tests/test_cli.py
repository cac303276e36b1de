import json
import subprocess
import sys

import pytest

from heraldsim.cli import main


def test_missing_seed_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate-clicks", "--out", str(tmp_path / "c.csv")])
    assert info.value.code == 2
    assert "--seed" in capsys.readouterr().err


def test_invalid_override_names_stage(tmp_path, capsys):
    code = main(["run-pipeline", "--seed", "1", "--out-dir", str(tmp_path),
                 "--set", "timing.rep_rate_Hz=-1"])
    err = capsys.readouterr().err
    assert code == 1
    assert "stage config" in err and "rep_rate_Hz" in err


def test_bad_trace_file_names_stage(tmp_path, capsys):
    bad = tmp_path / "bad.htr"
    bad.write_bytes(b"HTRS")
    code = main(["tomography", "--signal", str(bad), "--vacuum", str(bad)])
    err = capsys.readouterr().err
    assert code == 1 and "stage read" in err and "TruncatedFile" in err


def test_click_simulation_writes_csv(tmp_path):
    out, hist = tmp_path / "c.csv", tmp_path / "h.csv"
    assert main(["simulate-clicks", "--seed", "4", "--n-pulses", "100000000",
                 "--pulse-ns", "20", "--out", str(out), "--histogram", str(hist)]) == 0
    assert out.read_text().startswith("pulse_index,delay_ns")
    assert hist.read_text().startswith("bin_start_ns,count,normalized")


def test_homodyne_to_tomography_flow(tmp_path, capsys):
    sig, vac = tmp_path / "s.htr", tmp_path / "v.htr"
    mode, est, rep = tmp_path / "m.csv", tmp_path / "e.csv", tmp_path / "r.json"
    assert main(["simulate-homodyne", "--seed", "2", "--out", str(sig),
                 "--mode-out", str(mode)]) == 0
    assert main(["simulate-homodyne", "--seed", "2", "--vacuum", "--out", str(vac)]) == 0
    assert main(["extract-mode", "--signal", str(sig), "--vacuum", str(vac),
                 "--out", str(est)]) == 0
    assert main(["tomography", "--signal", str(sig), "--vacuum", str(vac), "--mode", str(est),
                 "--report", str(rep), "--marginal", str(tmp_path / "marg.csv")]) == 0
    report = json.loads(rep.read_text())
    assert report["W00"] == pytest.approx(-0.061, abs=0.02)
    assert (tmp_path / "marg.csv").read_text().startswith(
        "bin_center,empirical_density,fitted_density")
    capsys.readouterr()


def test_homodyne_flags_override_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[homodyne]\nn_windows = 50\n")
    out = tmp_path / "s.htr"
    assert main(["simulate-homodyne", "--config", str(cfg), "--seed", "1",
                 "--populations", "0,1", "--out", str(out)]) == 0
    from heraldsim.fileio import read_trace_set
    assert len(read_trace_set(out)) == 50


def test_run_pipeline_and_report(tmp_path, capsys):
    args = ["run-pipeline", "--seed", "7", "--n-pulses", "200000000"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "report.json").read_bytes()
    assert a == (tmp_path / "b" / "report.json").read_bytes()
    for name in ("report.txt", "click_histogram.csv", "click_model.csv", "variance.csv",
                 "modes.csv", "marginal.csv", "config.toml"):
        assert (tmp_path / "a" / name).exists()
    capsys.readouterr()
    assert main(["report", str(tmp_path / "a" / "report.json")]) == 0
    assert "W(0,0)" in capsys.readouterr().out
    assert main(["report", "--json", str(tmp_path / "a" / "report.json")]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 7


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "heraldsim", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("simulate-clicks", "simulate-homodyne", "extract-mode", "tomography",
                "run-pipeline", "report"):
        assert sub in proc.stdout
