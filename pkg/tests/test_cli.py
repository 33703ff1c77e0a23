import filecmp

import numpy as np
import pytest

from dptomo import cli, fit, io, tmd

SMALL = """\
[detector]
afterpulse_prob = 0.0

[probes]
alpha_max = 2.0
grid = 6, 6
events = 50000

[source]
mean_n = 0.11, 0.76
coupling = 0.75, 0.75
events = 200000

[run]
seed = 3
"""


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    (root / "config.ini").write_text(SMALL)
    assert cli.main(["simulate", str(root / "config.ini"), str(root / "out")]) == 0
    return root


def test_simulate_writes_files(run_dir):
    out = run_dir / "out"
    assert (out / "probes" / "manifest.csv").is_file()
    assert len(list((out / "probes").glob("probe_*.csv"))) == 36
    counts, meta = io.read_histogram(out / "data" / "pdc_2.csv")
    assert counts.sum() == 200_000 and float(meta["mean_n"]) == 0.76
    assert io.ExperimentConfig.load(out / "config.ini") == io.ExperimentConfig.loads(SMALL)


def test_simulate_is_byte_identical(run_dir, tmp_path):
    assert cli.main(["simulate", str(run_dir / "config.ini"), str(tmp_path / "again")]) == 0
    cmp = filecmp.dircmp(run_dir / "out" / "probes", tmp_path / "again" / "probes")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for name in ("pdc_1.csv", "pdc_2.csv"):
        assert filecmp.cmp(run_dir / "out" / "data" / name, tmp_path / "again" / "data" / name, shallow=False)


def test_missing_config_exits_1(tmp_path):
    assert cli.main(["simulate", str(tmp_path / "missing.ini"), str(tmp_path / "o")]) == 1


def test_invalid_config_exits_1(tmp_path):
    (tmp_path / "bad.ini").write_text("[detector]\nefficiency = 2\n")
    assert cli.main(["simulate", str(tmp_path / "bad.ini"), str(tmp_path / "o")]) == 1


def test_calibrate(run_dir, capsys):
    assert cli.main(["calibrate", str(run_dir / "out" / "probes")]) == 0
    line = capsys.readouterr().out.strip()
    eta = float(line.split("=")[1].split("+/-")[0])
    assert abs(eta - 0.22) < 0.02


def test_calibrate_unreadable_library_exits_2(tmp_path):
    assert cli.main(["calibrate", str(tmp_path)]) == 2


def test_reconstruct_and_report(run_dir, tmp_path, capsys):
    out = run_dir / "out"
    rec = tmp_path / "rec" / "pdc_2_signal.csv"
    args = ["reconstruct", str(out / "data" / "pdc_2.csv"), str(out / "probes"), "-o", str(rec)]
    assert cli.main(args + ["--view", "marginal-signal", "--d", "8", "--M", "30", "--reps", "5", "--seed", "1"]) == 0
    mean, std, meta = io.read_reconstruction(rec)
    assert mean.shape == (8,) and meta["view"] == "marginal-signal" and meta["M"] == "30"
    assert mean.min() >= 0 and abs(mean.sum() - 1) < 1e-9
    plot = rec.with_name("pdc_2_signal_plot.csv").read_text().splitlines()
    header = next(line for line in plot if not line.startswith("#"))
    assert header == "n,reconstructed,error,theory,bose_einstein"

    joint = tmp_path / "rec" / "pdc_2_joint.csv"
    args = ["reconstruct", str(out / "data" / "pdc_2.csv"), str(out / "probes"), "-o", str(joint)]
    assert cli.main(args + ["--d", "5", "--reps", "3"]) == 0
    assert io.read_reconstruction(joint)[0].shape == (5, 5)

    capsys.readouterr()
    assert cli.main(["report", str(tmp_path / "rec"), "--config", str(run_dir / "config.ini")]) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0].split()[:3] == ["file", "view", "M"]
    assert len(table) == 3
    assert any("0.76" in row for row in table[1:])


def test_reconstruct_deterministic(run_dir, tmp_path):
    out = run_dir / "out"
    files = []
    for k in range(2):
        path = tmp_path / f"r{k}.csv"
        args = ["reconstruct", str(out / "data" / "pdc_1.csv"), str(out / "probes"), "-o", str(path)]
        assert cli.main(args + ["--view", "marginal-idler", "--M", "20", "--reps", "4", "--seed", "5"]) == 0
        files.append(path)
    assert filecmp.cmp(*files, shallow=False)


def test_reconstruct_bad_inputs(run_dir, tmp_path):
    out = run_dir / "out"
    assert cli.main(["reconstruct", str(tmp_path / "none.csv"), str(out / "probes"), "-o", str(tmp_path / "r.csv")]) == 2
    assert cli.main(["reconstruct", str(out / "data" / "pdc_1.csv"), str(tmp_path), "-o", str(tmp_path / "r.csv")]) == 2


def test_reconstruct_solver_failure_exits_3(run_dir, tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise fit.InfeasibleProblemError("forced")

    monkeypatch.setattr(fit, "solve", fail)
    out = run_dir / "out"
    args = ["reconstruct", str(out / "data" / "pdc_1.csv"), str(out / "probes"), "-o", str(tmp_path / "r.csv")]
    assert cli.main(args + ["--reps", "2"]) == 3


def test_report_empty_dir_exits_2(tmp_path):
    assert cli.main(["report", str(tmp_path)]) == 2


def test_report_row_values(tmp_path, capsys):
    P = np.array([0.5, 0.3, 0.2])
    meta = {"view": "marginal-idler", "M": 30, "n_mean": "0.7", "n_std": "0.01", "w0_mean": "0.4", "w0_std": "0.02"}
    io.write_reconstruction(tmp_path / "r.csv", P, np.zeros(3), meta)
    assert cli.main(["report", str(tmp_path)]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert "0.700 +/- 0.010" in rows[1] and "+0.400 +/- 0.020" in rows[1]


def test_theory_for_view_shapes():
    det = tmd.DetectorConfig(afterpulse_prob=0.0)
    assert cli.theory_for_view("joint", 0.76, (0.75, 0.75), det, 6).shape == (6, 6)
    assert cli.theory_for_view("class-idler", 0.76, (0.75, 0.75), det, 6).shape == (6,)
    her = cli.theory_for_view("heralded-single", 0.11, (0.75, 1.0), det, 8)
    assert abs(her.sum() - 1) < 1e-6
