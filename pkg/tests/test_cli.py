import subprocess
import sys

import numpy as np
import pytest

from contamreg.cli import main
from contamreg.model import Sample


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _read(path):
    return path.read_bytes()


def test_simulate_then_estimate_round_trip(tmp_path, capsys):
    sim = tmp_path / "sim"
    code, out, _ = run(["simulate", "--seed", 3, "--n", 200, "--out", sim], capsys)
    assert code == 0 and "n=200" in out
    sample = Sample.from_csv(sim / "data.csv")
    assert sample.n == 200 and sample.u is not None
    est = tmp_path / "est"
    code, out, _ = run(["estimate", sim / "data.csv", "--seed", 3, "--out", est, "--lattice", 2,
                        "--max-iters", 60], capsys)
    assert code == 0 and "p_hat" in out
    header, row = (est / "estimate.csv").read_text().splitlines()
    p_hat = float(row.split(",")[0])
    assert abs(p_hat - 0.7) < 0.15
    for name in ("report.txt", "minima.csv", "f_hat.csv", "F_hat.csv", "config.txt"):
        assert (est / name).exists()
    f = np.loadtxt(est / "f_hat.csv", delimiter=",", skiprows=1)
    assert f.shape == (401, 3) and np.all(f[:, 2] >= 0)
    F = np.loadtxt(est / "F_hat.csv", delimiter=",", skiprows=1)
    assert np.all(np.diff(F[:, 2]) >= 0)


def test_empty_csv_names_file(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    code, out, err = run(["estimate", empty, "--seed", 1, "--out", tmp_path / "o"], capsys)
    assert code != 0
    assert "empty.csv" in err and err.startswith("contamreg: error: estimate:")
    assert len(err.strip().splitlines()) == 1


def test_malformed_csv_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n3,oops\n")
    code, _, err = run(["estimate", bad, "--seed", 1, "--out", tmp_path / "o"], capsys)
    assert code == 2 and "line 3" in err


def test_diagnose_reports_spurious_and_box_advice(tmp_path, capsys):
    code, out, _ = run(["diagnose", "--p-star", 0.3, "--alpha-star", 0, "--beta-star", 1, "--mu-x", 0,
                        "--seed", 0, "--out", tmp_path], capsys)
    assert code == 0
    assert "spurious zero: (0.6, 0, 0.5)" in out
    assert "p_hi <" in out and "C i" in out and "FAIL" in out
    assert (tmp_path / "diagnose.txt").read_text() == out


def test_config_file_and_flag_precedence(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# simulation settings\nn = 50\nseed=9\ndesign-mean=0.5  # comment\n")
    out_dir = tmp_path / "o"
    code, _, _ = run(["simulate", "--config", conf, "--n", 70, "--out", out_dir], capsys)
    assert code == 0
    echoed = (out_dir / "config.txt").read_text().splitlines()
    assert "n=70" in echoed and "seed=9" in echoed and "design_mean=0.5" in echoed
    assert Sample.from_csv(out_dir / "data.csv").n == 70


def test_unknown_config_key_and_bad_values(tmp_path, capsys):
    conf = tmp_path / "c.conf"
    conf.write_text("colour=blue\n")
    code, _, err = run(["simulate", "--config", conf, "--out", tmp_path], capsys)
    assert code == 2 and "colour" in err
    code, _, err = run(["simulate", "--n", "ten", "--seed", 1, "--out", tmp_path], capsys)
    assert code == 2 and "n:" in err
    code, _, err = run(["simulate", "--p-star", 1.5, "--seed", 1, "--out", tmp_path], capsys)
    assert code == 2 and "p" in err
    code, _, err = run(["diagnose", "--box", "0.9,0.1,-3,3,0.1,3", "--seed", 1, "--out", tmp_path], capsys)
    assert code == 2
    code, _, err = run(["simulate", "--model", "M7", "--seed", 1, "--out", tmp_path], capsys)
    assert code == 2 and "M7" in err


def test_generated_seed_is_printed(tmp_path, capsys):
    code, out, _ = run(["simulate", "--n", 20, "--out", tmp_path], capsys)
    assert code == 0 and out.startswith("seed=")
    seed = out.splitlines()[0].split("=")[1]
    assert f"seed={seed}" in (tmp_path / "config.txt").read_text()


def test_config_written_before_computing(tmp_path, capsys):
    bad = tmp_path / "missing.csv"
    code, _, err = run(["surface", bad, "--seed", 2, "--out", tmp_path / "o"], capsys)
    assert code == 2 and "missing.csv" in err
    assert (tmp_path / "o" / "config.txt").exists()


def test_surface_and_demo_outputs(tmp_path, capsys):
    run(["simulate", "--seed", 5, "--n", 100, "--out", tmp_path], capsys)
    code, out, _ = run(["surface", tmp_path / "data.csv", "--seed", 5, "--grid", "3,4", "--out", tmp_path / "s"],
                       capsys)
    assert code == 0 and "grid minimum" in out
    rows = (tmp_path / "s" / "surface.csv").read_text().splitlines()
    assert rows[0] == "p,alpha,beta,d_n" and len(rows) == 13
    code, out, _ = run(["demo", "--seed", 5, "--out", tmp_path / "d"], capsys)
    assert code == 0
    for name in ("data.csv", "hist_0_0.csv", "hist_1_0.5.csv", "hist_2_1.csv"):
        assert (tmp_path / "d" / name).exists()


def test_replicate_outputs(tmp_path, capsys):
    code, out, _ = run(["replicate", "--seed", 1, "--reps", 3, "--ns", "40,60", "--out", tmp_path], capsys)
    assert code == 0
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(summary) == 3 and summary[1].startswith("M1,,40,3,")
    assert (tmp_path / "replications_n60.csv").exists()
    manifest = (tmp_path / "manifest.txt").read_text()
    assert "seed=1" in manifest and "n=40" in manifest and "n=60" in manifest
    code, _, err = run(["replicate", "--seed", 1, "--protocol", "magic", "--out", tmp_path], capsys)
    assert code == 2 and "protocol" in err


def test_rerun_is_byte_identical(tmp_path, capsys):
    run(["simulate", "--seed", 8, "--n", 80, "--out", tmp_path / "a"], capsys)
    run(["simulate", "--seed", 8, "--n", 80, "--out", tmp_path / "b"], capsys)
    assert _read(tmp_path / "a" / "data.csv") == _read(tmp_path / "b" / "data.csv")
    data = tmp_path / "a" / "data.csv"
    for d in ("e1", "e2"):
        run(["estimate", data, "--seed", 8, "--lattice", 0, "--starts", "0.6,0,0.9", "--out", tmp_path / d], capsys)
    for name in ("estimate.csv", "minima.csv", "f_hat.csv", "F_hat.csv", "report.txt"):
        assert _read(tmp_path / "e1" / name) == _read(tmp_path / "e2" / name)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "contamreg", "diagnose", "--seed", "0", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "contrast conditions" in proc.stdout


def test_missing_subcommand_exits_nonzero():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code != 0
