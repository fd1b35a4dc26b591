"""Tests for the command-line front end: preset resolution, the five
subcommands, artifact schemas, manifests, and rerun determinism."""

import csv
import json
import statistics
import subprocess

import pytest

from feelab.cli import (
    ConfigError,
    main,
    resolve_experiment,
    schema_check_dir,
)


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


TINY_EXPERIMENT = {
    "sizes": [2],
    "values": [1, 2],
    "arrival": {"kind": "uniform"},
    "B": 3,
    "c_over": 1,
    "c_hold": 1.0,
    "gamma": 0.9,
    "eta": 0.05,
    "L": 2,
    "iterations": 5,
    "H": 10,
    "seed": 9,
}


# ---------------------------------------------------------------- presets


def test_resolve_preset_desk_scale():
    exp = resolve_experiment({"setting": "setting1"})
    assert exp["B"] == [30, 35, 40]
    assert exp["c_over"] == [0, 1, 10, 30, 50, 70, 100, 150]
    assert exp["eta"] == 3e-5
    assert exp["seed"] == 5800
    assert exp["iterations"] == 2000 and exp["H"] == 200
    assert exp["setting"] == "setting1"


def test_resolve_paper_scale():
    exp = resolve_experiment({"setting": "setting1"}, paper_scale=True)
    assert exp["iterations"] == 10000 and exp["H"] == 400
    exp3 = resolve_experiment({"setting": "setting3"}, paper_scale=True)
    assert exp3["H"] == 1000
    assert exp3["arrival"] == {"kind": "poisson", "lam": 0.6}


def test_resolve_overrides_and_scalar_promotion():
    doc = {"setting": "setting1", "B": 10, "c_over": 3, "eta": 1e-3, "L": None}
    exp = resolve_experiment(doc)
    assert exp["B"] == [10]  # scalars become one-point grids
    assert exp["c_over"] == [3]
    assert exp["eta"] == 1e-3
    assert exp["L"] == 8  # None does not override the preset


def test_resolve_unknown_setting_raises():
    with pytest.raises(ConfigError):
        resolve_experiment({"setting": "setting9"})


def test_resolve_missing_fields_raises():
    with pytest.raises(ConfigError, match="missing"):
        resolve_experiment({"B": 5, "c_over": 0})


def test_resolve_custom_defaults():
    exp = resolve_experiment(dict(TINY_EXPERIMENT))
    assert exp["setting"] == "custom"
    assert exp["seed"] == 9
    no_seed = {k: v for k, v in TINY_EXPERIMENT.items() if k != "seed"}
    assert resolve_experiment(no_seed)["seed"] == 0


# ---------------------------------------------------------------- static


def test_static_sample_run(tmp_path):
    """Bundled sample instance: the greedy market schedules everything the
    offline optimum does (SW 120), so the ratio check passes."""
    rc = main(["static", "--out", str(tmp_path), "--schema-check"])
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["feasible"] is True
    assert report["sw_alg"] == 120.0
    assert report["sw_opt"] == 120.0
    assert report["ratio_ok"] is True
    assert report["empty_block_flag"] is False
    assert report["gamma_bound"] == pytest.approx(22.103418361512954, rel=1e-12)
    with open(tmp_path / "trace.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header == ["t", "price", "scheduled_volume", "cumulative_welfare",
                      "n_included", "dropped"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "static"
    assert manifest["seed"] == 0  # no --seed given
    assert manifest["config"]["order"] == "value_desc"


def test_static_empty_instance_is_trivial(tmp_path):
    inst = write_json(tmp_path / "empty.json", {"B": 5, "T": 3, "transactions": []})
    out = tmp_path / "out"
    rc = main(["static", "--instance", inst, "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["trivial"] is True
    assert report["empty_block_flag"] is True  # all three blocks are empty
    assert report["sw_alg"] == 0.0 and report["sw_opt"] == 0.0
    assert report["ratio_ok"] is None  # no bound is claimed on empty traces


def test_static_missing_instance_exits_one(tmp_path, capsys):
    rc = main(["static", "--instance", str(tmp_path / "nope.json"),
               "--out", str(tmp_path / "out")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------- train


def test_train_requires_config_or_setting(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_train_tiny_config(tmp_path):
    cfg = write_json(tmp_path / "cfg.json", TINY_EXPERIMENT)
    out = tmp_path / "run"
    rc = main(["train", "--config", cfg, "--out", str(out), "--schema-check"])
    assert rc == 0
    with open(out / "metrics.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "iteration"
    assert len(rows) == 1 + TINY_EXPERIMENT["iterations"]
    policy = json.loads((out / "policy.json").read_text())
    assert policy["n_actions"] == 2  # one action per value class
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 9
    assert manifest["config"]["B"] == 3


def test_train_rerun_is_byte_identical(tmp_path):
    cfg = write_json(tmp_path / "cfg.json", TINY_EXPERIMENT)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", cfg, "--out", str(a)]) == 0
    assert main(["train", "--config", cfg, "--out", str(b)]) == 0
    for name in ("metrics.csv", "policy.json", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_train_seed_flag_overrides_config(tmp_path):
    cfg = write_json(tmp_path / "cfg.json", TINY_EXPERIMENT)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", cfg, "--out", str(a), "--seed", "123"]) == 0
    assert main(["train", "--config", cfg, "--out", str(b)]) == 0
    ma = json.loads((a / "manifest.json").read_text())
    assert ma["seed"] == 123
    assert (a / "metrics.csv").read_bytes() != (b / "metrics.csv").read_bytes()


def test_train_rejects_grids(tmp_path, capsys):
    doc = dict(TINY_EXPERIMENT, B=[3, 4])
    cfg = write_json(tmp_path / "cfg.json", doc)
    rc = main(["train", "--config", cfg, "--out", str(tmp_path / "out")])
    assert rc == 1
    assert "single point" in capsys.readouterr().err


# ---------------------------------------------------------------- sweep


def test_sweep_grid(tmp_path):
    doc = dict(TINY_EXPERIMENT, B=[3, 4], c_over=[0, 1], iterations=4, H=8, seed=11)
    cfg = write_json(tmp_path / "cfg.json", doc)
    out = tmp_path / "sweep"
    rc = main(["sweep", "--config", cfg, "--out", str(out), "--schema-check"])
    assert rc == 0

    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["B", "c_over", "lam", "mean_reward", "mean_q_sched",
                       "mean_q_pool", "entropy"]
    assert len(rows) == 5
    assert [r[:2] for r in rows[1:]] == [["3", "0"], ["3", "1"], ["4", "0"], ["4", "1"]]
    assert all(r[2] == "" for r in rows[1:])  # lam is null for uniform arrivals

    # per-point runs get consecutive seeds so points stay independent
    dirs = ["B3_cover0", "B3_cover1", "B4_cover0", "B4_cover1"]
    for idx, name in enumerate(dirs):
        manifest = json.loads((out / name / "manifest.json").read_text())
        assert manifest["seed"] == 11 + idx
    top = json.loads((out / "manifest.json").read_text())
    assert top["seed"] == 11

    # the aggregate row is the run-mean of the per-iteration metrics
    with open(out / "B3_cover0" / "metrics.csv", newline="") as fh:
        metric_rows = list(csv.DictReader(fh))
    recomputed = statistics.fmean(float(r["mean_reward"]) for r in metric_rows)
    assert float(rows[1][3]) == pytest.approx(recomputed, rel=1e-12)


# ---------------------------------------------------------------- vi


VI_DOC = {
    "B": 10,
    "c_hold": 1.0,
    "c_over": 0.5,
    "gamma": 0.95,
    "arrivals": [[12.0, 1.0]],
    "L": 20,
    "delta": 0.5,
}


def test_vi_flat_out_threshold(tmp_path):
    cfg = write_json(tmp_path / "vi.json", VI_DOC)
    out = tmp_path / "out"
    rc = main(["vi", "--config", cfg, "--out", str(out), "--schema-check"])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["s_star"] == 10.0
    assert report["within_one_step"] is True
    assert report["convex_ok"] is True
    assert report["monotone_ok"] is True
    assert report["bellman_residual"] < 1e-9
    with open(out / "table.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header == ["s", "J", "f_star", "y_star"]


def test_vi_bad_grid_exits_one(tmp_path, capsys):
    cfg = write_json(tmp_path / "vi.json", dict(VI_DOC, delta=3.0))
    rc = main(["vi", "--config", cfg, "--out", str(tmp_path / "out")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_vi_missing_field_exits_one(tmp_path):
    doc = {k: v for k, v in VI_DOC.items() if k != "gamma"}
    cfg = write_json(tmp_path / "vi.json", doc)
    assert main(["vi", "--config", cfg, "--out", str(tmp_path / "out")]) == 1


# ---------------------------------------------------------------- bangbang


def test_bangbang_requires_class_count(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["bangbang", "--sizes", "2,4", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_bangbang_report(tmp_path):
    rc = main(["bangbang", "--sizes", "2,4", "--n", "2", "--B", "9", "--k", "2",
               "--out", str(tmp_path), "--schema-check"])
    assert rc == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["flush_size"] == 18
    assert doc["avg_overshoot"] == 4.5
    assert doc["overshoot_bound"] == 4.5
    assert doc["min_capacity"] == 9.0
    assert doc["k_range"] == [2, 2]
    assert doc["periodic"] is True
    assert doc["delta_ok"] is True


def test_bangbang_infeasible_capacity(tmp_path):
    """B=8 exceeds Q=6 but sits below min_capacity=9: the report carries the
    bounds and a note instead of a simulation."""
    rc = main(["bangbang", "--sizes", "2,4", "--n", "2", "--B", "8",
               "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["k_range"] is None
    assert "note" in doc
    assert "flush_size" not in doc


def test_bangbang_bad_cadence_exits_one(tmp_path, capsys):
    rc = main(["bangbang", "--sizes", "2,4", "--n", "2", "--B", "12", "--k", "5",
               "--out", str(tmp_path)])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------- schemas


def test_schema_check_flags_bad_artifacts(tmp_path):
    (tmp_path / "metrics.csv").write_text("wrong,header\n1,2\n")
    with pytest.raises(ConfigError, match="expected header"):
        schema_check_dir(str(tmp_path))


def test_schema_check_nullable_lam_only(tmp_path):
    head = "B,c_over,lam,mean_reward,mean_q_sched,mean_q_pool,entropy\n"
    (tmp_path / "sweep.csv").write_text(head + "3,0,,-1.0,2.0,4.0,0.5\n")
    schema_check_dir(str(tmp_path))  # empty lam is fine
    (tmp_path / "sweep.csv").write_text(head + "3,0,,,2.0,4.0,0.5\n")
    with pytest.raises(ConfigError, match="non-numeric"):
        schema_check_dir(str(tmp_path))


def test_schema_check_policy_probabilities(tmp_path):
    doc = {"n_actions": 2, "probs": {"0,0": [0.7, 0.2]}}
    (tmp_path / "policy.json").write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="sums to"):
        schema_check_dir(str(tmp_path))


def test_console_script_smoke(tmp_path):
    proc = subprocess.run(
        ["feelab", "bangbang", "--sizes", "2,4", "--n", "2", "--B", "9",
         "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads((tmp_path / "report.json").read_text())["k"] == 2
