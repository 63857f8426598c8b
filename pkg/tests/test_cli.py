import json

import pytest

from dsgm.cli import build_parser, main

SMALL = ["--set", "n=80", "--set", "epochs=5", "--set", "se_dims=2", "--set", "gammas=0.02,0.05",
         "--set", "gnn_hidden=4", "--set", "se_hidden=4", "--trials", "1"]


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--help"])
    text = capsys.readouterr().out
    for cmd in ("sample", "spectra", "concentration", "train", "bench-synthetic", "bench-real", "freq", "interpolate"):
        assert cmd in text


def test_sample(tmp_path):
    assert main(["sample", "--out", str(tmp_path), "--seed", "4"] + SMALL) == 0
    assert (tmp_path / "graph_gamma0.02.edges").is_file()
    m = _manifest(tmp_path)
    assert m["seed"] == 4 and m["config"]["n"] == 80 and "numpy" in m["versions"]
    assert (tmp_path / "config.txt").read_text().startswith("experiment = ")


def test_spectra_with_graph(tmp_path):
    assert main(["sample", "--out", str(tmp_path)] + SMALL) == 0
    edges = tmp_path / "graph_gamma0.02.edges"
    assert main(["spectra", "--out", str(tmp_path), "--graph", str(edges), "--top", "5", "--operator", "norm"]) == 0
    rows = (tmp_path / "graph_spectrum_norm.csv").read_text().splitlines()
    assert len(rows) == 6
    rows = (tmp_path / "kernel_spectrum.csv").read_text().splitlines()
    assert float(rows[1].split(",")[3]) < 1e-3 and float(rows[2].split(",")[3]) < 1e-3


def test_bench_synthetic_byte_identical(tmp_path):
    args = ["bench-synthetic", "--seed", "7", "--operator", "norm"] + SMALL
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("records.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert _manifest(tmp_path / "a")["config"]["operators"] == ["norm"]


def test_train_concentration_freq_interpolate(tmp_path):
    assert main(["train", "--out", str(tmp_path / "t")] + SMALL) == 0
    assert (tmp_path / "t" / "model_linear.npz").is_file()
    assert main(["concentration", "--out", str(tmp_path / "c")] + SMALL) == 0
    assert "beta_fit" in _manifest(tmp_path / "c")
    assert main(["freq", "--out", str(tmp_path / "f")] + SMALL) == 0
    assert (tmp_path / "f" / "freq_sparse_nonlinear.csv").is_file()
    assert main(["interpolate", "--out", str(tmp_path / "i"), "--set", "instances=5"]) == 0
    assert _manifest(tmp_path / "i")["worst_residual"] <= 1e-8


def test_bench_real_skips_without_files(tmp_path, capsys):
    assert main(["bench-real", "--out", str(tmp_path)]) == 0
    assert "skipped" in capsys.readouterr().err
    assert _manifest(tmp_path)["skipped"] is True


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["sample", "--out", str(tmp_path), "--set", "bogus=1"]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert main(["sample", "--out", str(tmp_path), "--config", str(tmp_path / "missing.txt")]) == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.txt"
    cfg.write_text("n = 60\nseed = 1\ngammas = 0.05\n")
    assert main(["sample", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "o")]) == 0
    m = _manifest(tmp_path / "o")
    assert m["seed"] == 9 and m["config"]["n"] == 60
