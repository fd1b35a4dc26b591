"""Tests for the figure-rendering command line."""

import json

import pytest

from feelab_plots.cli import main

HEADER = "B,c_over,lam,mean_reward,mean_q_sched,mean_q_pool,entropy\n"
ROWS = (
    "30,0,,-100.0,53.6,200.0,0.9\n"
    "30,150,,-300.0,28.1,450.0,0.4\n"
    "35,0,,-110.0,60.0,220.0,0.9\n"
    "35,150,,-320.0,33.0,470.0,0.5\n"
)


def make_sweep_dir(tmp_path, body=ROWS):
    d = tmp_path / "sweep"
    d.mkdir()
    (d / "sweep.csv").write_text(HEADER + body)
    return d


def test_renders_all_figures(tmp_path):
    src = make_sweep_dir(tmp_path)
    out = tmp_path / "figs"
    assert main(["--in", str(src), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == [
        "figures_manifest.json",
        "volume_vs_capacity.png", "volume_vs_capacity.svg",
        "volume_vs_penalty_B30.png", "volume_vs_penalty_B30.svg",
        "volume_vs_penalty_B35.png", "volume_vs_penalty_B35.svg",
    ]
    manifest = json.loads((out / "figures_manifest.json").read_text())
    assert manifest["format"] == "both"
    assert len(manifest["outputs"]) == 6
    assert "matplotlib" in manifest["renderer"]


def test_png_only_format(tmp_path):
    src = make_sweep_dir(tmp_path)
    out = tmp_path / "figs"
    assert main(["--in", str(src), "--out", str(out), "--format", "png"]) == 0
    exts = {p.suffix for p in out.iterdir()}
    assert exts == {".png", ".json"}


def test_single_target_skips_capacity_figure(tmp_path):
    src = make_sweep_dir(tmp_path, "30,0,,-100.0,53.6,200.0,0.9\n")
    out = tmp_path / "figs"
    assert main(["--in", str(src), "--out", str(out)]) == 0
    assert not (out / "volume_vs_capacity.png").exists()
    assert (out / "volume_vs_penalty_B30.png").exists()


def test_missing_sweep_exits_one(tmp_path, capsys):
    assert main(["--in", str(tmp_path), "--out", str(tmp_path / "figs")]) == 1
    assert "error:" in capsys.readouterr().err


def test_bad_schema_exits_one(tmp_path, capsys):
    d = tmp_path / "sweep"
    d.mkdir()
    (d / "sweep.csv").write_text("wrong,header\n1,2\n")
    assert main(["--in", str(d), "--out", str(tmp_path / "figs")]) == 1
    assert "missing columns" in capsys.readouterr().err


def test_bad_format_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["--in", str(tmp_path), "--out", str(tmp_path), "--format", "gif"])
    assert exc.value.code == 2


def test_rerun_byte_identical(tmp_path):
    src = make_sweep_dir(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--in", str(src), "--out", str(a)]) == 0
    assert main(["--in", str(src), "--out", str(b)]) == 0
    for p in sorted(a.iterdir()):
        assert p.read_bytes() == (b / p.name).read_bytes()
