import json
import subprocess
import sys

import numpy as np
import pytest

from dl0cs.cli import main
from dl0cs.signal import load_instance

SMALL = ["--n", "60", "--m", "24", "--k", "3", "--p", "3", "--set", "p_links=2",
         "--max-iterations", "300", "--record-every", "50", "--no-stop"]


def test_gen_then_run_from_file(tmp_path, capsys):
    inst_path = tmp_path / "inst.bin"
    assert main(["gen", *SMALL, "--out", str(inst_path)]) == 0
    inst = load_instance(inst_path)
    assert (inst.n, inst.m, inst.signal.sparsity) == (60, 24, 3)
    curve = tmp_path / "curve.csv"
    summary = tmp_path / "s.json"
    code = main(["run", *SMALL, "--instance", str(inst_path), "--mu", "0.4",
                 "--out", str(curve), "--summary", str(summary)])
    assert code == 0
    rows = curve.read_text().splitlines()
    assert rows[0] == "iteration,msd_db,avg_sparsity,stopped"
    assert rows[-1].startswith("300,") and rows[-1].endswith(",1")
    rec = json.loads(summary.read_text())
    assert rec["iterations_used"] == 300 and rec["stop_reason"] == "max-iterations"
    assert {"final_msd_db", "success", "seed", "elapsed_seconds"} <= set(rec)


def test_run_from_file_equals_generated(tmp_path):
    inst_path = tmp_path / "inst.bin"
    main(["gen", *SMALL, "--out", str(inst_path)])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["run", *SMALL, "--mu", "0.4", "--out", str(a), "--summary", str(tmp_path / "x.json")])
    main(["run", *SMALL, "--mu", "0.4", "--instance", str(inst_path), "--out", str(b),
          "--summary", str(tmp_path / "y.json")])
    assert a.read_text() == b.read_text()


def test_divergence_exit_code(tmp_path):
    code = main(["run", *SMALL, "--mu", "80", "--xi", "0", "--out", str(tmp_path / "c.csv"),
                 "--summary", str(tmp_path / "s.json")])
    assert code == 2
    assert json.loads((tmp_path / "s.json").read_text())["stop_reason"] == "divergence"


@pytest.mark.parametrize("argv", [[], ["run", "--bogus"], ["run", "--set", "nokey=1"],
                                  ["run", "--n", "ten"], ["sweep", "--param", "delta", "--values", "1"],
                                  ["mc", "--config", "/nonexistent/file.cfg"]])
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("n = 60\nm = 24\nk = 3\np = 3\np_links = 2\n# comment\nmu = 0.4\n")
    assert main(["analyze", "--config", str(cfg), "--p", "2", "--mus", "0.4"]) == 0
    out = capsys.readouterr().out
    assert "P: 2" in out and "stable_F[mu=0.4]: true" in out


def test_analyze_with_theorems_and_gamma(capsys):
    assert main(["analyze", *SMALL, "--gamma", "--mus", "0.2,30", "--check-theorems", "--trials", "10"]) == 0
    out = capsys.readouterr().out
    assert "stable_gamma[mu=0.2]: true" in out
    assert "stable_F[mu=30]: false" in out
    assert out.count(": pass trials=10") == 3


def test_mc_and_sweep_outputs(tmp_path, capsys):
    curve, runs = tmp_path / "mc.csv", tmp_path / "runs.csv"
    assert main(["mc", *SMALL, "--runs", "2", "--mu", "0.4", "--out", str(curve),
                 "--runs-out", str(runs), "--summary", str(tmp_path / "s.json")]) == 0
    assert len(runs.read_text().splitlines()) == 3
    assert main(["sweep", *SMALL, "--runs", "1", "--param", "sigma", "--values", "0,0.01",
                 "--out", str(tmp_path / "sw.csv")]) == 0
    table = np.genfromtxt(tmp_path / "sw.csv", delimiter=",", names=True)
    assert table["value"].tolist() == [0.0, 0.01]


def test_mumax_prints_result(capsys):
    assert main(["mumax", *SMALL, "--xi", "0", "--runs-per-point", "1", "--range", "0.05", "50",
                 "--mode", "no-divergence"]) == 0
    out = capsys.readouterr().out
    assert "mu_max: " in out and "not-found" not in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dl0cs", "analyze", "--n", "60", "--m", "24", "--p", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "mu_lower: " in proc.stdout
