import csv
import subprocess
import sys

import numpy as np
import pytest

from normsim.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

RUN_INI = """\
[model]
family = third_party
[population]
size = 40
[run]
generations = 6
seed = 3
[sweep]
parameter = m
values = 0, 0.5
runs = 2
seed_base = 20
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "tp.ini"
    path.write_text(RUN_INI)
    return path


def test_validate_ok(cfg, capsys):
    assert main(["validate", "--config", str(cfg)]) == EXIT_OK
    assert "ok" in capsys.readouterr().out


def test_validate_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\nfamily = pgg\n[game]\nlambda = 2\nrho = 1\n")
    assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
    assert "line 4" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "nope.ini")]) == EXIT_CONFIG


def test_run_writes_one_row_per_generation(cfg, tmp_path):
    out = tmp_path / "run.csv"
    edges = tmp_path / "edges.txt"
    assert main(["--quiet", "run", "--config", str(cfg), "--out", str(out), "--dump-topology", str(edges)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0][:3] == ["generation", "C-R", "C-A"]
    assert len(rows) == 1 + 6
    assert len(edges.read_text().splitlines()) == 40 * 4 // 2


def test_run_seed_override_changes_output(cfg, tmp_path):
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    main(["--quiet", "run", "--config", str(cfg), "--out", str(a)])
    main(["--quiet", "run", "--config", str(cfg), "--out", str(b), "--seed", "3"])
    main(["--quiet", "run", "--config", str(cfg), "--out", str(c), "--seed", "4"])
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_sweep_outputs(cfg, tmp_path):
    out, plot = tmp_path / "s.csv", tmp_path / "s.dat"
    assert main(["--quiet", "sweep", "--config", str(cfg), "--out", str(out), "--plot-data", str(plot)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("m,C-R_mean,C-R_std")
    assert plot.read_text().startswith("# series: C-R")


def test_sweep_without_section(tmp_path):
    path = tmp_path / "nosweep.ini"
    path.write_text("[model]\nfamily = pgg\n")
    assert main(["sweep", "--config", str(path)]) == EXIT_CONFIG


def test_replicator(tmp_path):
    m = tmp_path / "pd.txt"
    m.write_text("# cooperate, defect\n3 0\n5 1\n")
    out = tmp_path / "traj.csv"
    assert main(["replicator", "--matrix", str(m), "--horizon", "2", "--step", "0.5", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["t", "x0", "x1"]
    assert [r[0] for r in rows[1:]] == ["0", "0.5", "1", "1.5", "2"]
    x1 = np.array([float(r[2]) for r in rows[1:]])
    assert np.all(np.diff(x1) > 0)


def test_replicator_bad_inputs(tmp_path):
    m = tmp_path / "m.txt"
    m.write_text("1 2 3\n4 5 6\n")
    assert main(["replicator", "--matrix", str(m)]) == EXIT_CONFIG
    m.write_text("1 0\n0 1\n")
    assert main(["replicator", "--matrix", str(m), "--initial", "0.7,0.7"]) == EXIT_CONFIG
    assert main(["replicator", "--matrix", str(m), "--initial", "1"]) == EXIT_CONFIG


def test_replicator_step_too_large_is_runtime_error(tmp_path):
    m = tmp_path / "m.txt"
    m.write_text("0 100\n0 0\n")
    assert main(["replicator", "--matrix", str(m), "--horizon", "5", "--step", "1", "--out",
                 str(tmp_path / "o.csv")]) == EXIT_RUNTIME


def test_module_entry_point(cfg):
    proc = subprocess.run([sys.executable, "-m", "normsim", "validate", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
