import pytest

from chaosgal.cli import main


def test_oracle_rates_pass(tmp_path):
    assert main(["rates", "--oracle", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "rates.csv").exists()


def test_global_flags_either_side(tmp_path):
    assert main(["--out", str(tmp_path / "a"), "simulate", "--system", "cat", "--n", "10"]) == 0
    assert main(["simulate", "--system", "doubling", "--n", "10", "--eps", "0.1",
                 "--out", str(tmp_path / "b"), "--seed", "3"]) == 0
    lines = (tmp_path / "b" / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "x0,y0" and len(lines) == 11


def test_input_errors(tmp_path, capsys):
    assert main(["simulate", "--n", "-1"]) == 2
    assert main(["nope"]) == 2
    assert main(["--seed", "-4", "simulate"]) == 2
    assert main(["--config", str(tmp_path / "missing.ini"), "rates", "--oracle"]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nn_grid = 512 256\n")
    assert main(["--config", str(bad), "--out", str(tmp_path), "rates", "--oracle"]) == 2
    assert main(["simulate", "--eps", "0.7", "--out", str(tmp_path)]) == 2


def test_tower_spec_file(tmp_path):
    spec = tmp_path / "t.txt"
    spec.write_text("cell 0 2 0.5 0.0 0.5\ncell 1 3 0.5 0.5 1.0\n")
    cfg = tmp_path / "c.ini"
    cfg.write_text("[tower]\nsamples = 100\ninvariance_samples = 1000\n")
    # the spec is not a tower of the doubling map; the checks must fail, not crash
    assert main(["--config", str(cfg), "--out", str(tmp_path), "tower-check", "--spec",
                 str(spec)]) == 1
    spec.write_text("cell zero\n")
    assert main(["--out", str(tmp_path), "tower-check", "--spec", str(spec)]) == 2
