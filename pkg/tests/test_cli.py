import csv
import json

import numpy as np
import pytest

from shenet import config as cfgmod
from shenet.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, bench_search, linear_fit_r2, main
from shenet.trajdata import load_raster, load_trajectory_file

TINY = [
    "--set", "data.per_group=8", "--set", "data.n_test=6", "--set", "bank.k=4",
    "--set", "model.d_model=8", "--set", "model.n_heads=2", "--set", "model.n_layers_traj=1",
    "--set", "model.n_layers_cross=1", "--set", "model.d_ff=16", "--set", "model.head_hidden=8",
    "--set", "train.epochs=1",
]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.mark.parametrize("verb", ["cluster", "train", "predict", "evaluate", "run", "bench-search", "synth"])
def test_help_lists_all_keys(verb, capsys):
    with pytest.raises(SystemExit) as exc:
        main([verb, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for sec, keys in cfgmod.SCHEMA.items():
        for k, (default, _) in keys.items():
            assert f"{sec}.{k} = {json.dumps(default)}" in text


def test_cluster_zero_noise_three_groups(tmp_path, capsys):
    code = run("cluster", "--out", tmp_path, "--set", "data.noise_sigma=0", "--set", "data.per_group=20",
               "--set", "bank.k=3", "--set", "data.n_test=0")
    assert code == EXIT_OK
    assert "K=3 entries=3" in capsys.readouterr().out
    rows = list(csv.DictReader((tmp_path / "clusters.csv").open()))
    assert len(rows) == 3
    assert all(float(r["mean_distance"]) <= 1e-12 for r in rows)
    assert sum(int(r["size"]) for r in rows) == 60
    assert json.loads((tmp_path / "bank.json").read_text())["entries"]


def test_cluster_k_too_large_is_config_error(tmp_path, capsys):
    code = run("cluster", "--out", tmp_path, "--set", "data.per_group=5", "--set", "data.n_test=3",
               "--set", "bank.k=20")
    assert code == EXIT_CONFIG
    assert "bank.k" in capsys.readouterr().err


def test_unknown_key_and_bad_file(tmp_path, capsys):
    assert run("cluster", "--out", tmp_path, "--set", "bank.zeta=1") == EXIT_CONFIG
    assert run("cluster", "--config", tmp_path / "missing.json") == EXIT_CONFIG
    bad = tmp_path / "bad.txt"
    bad.write_text("0 1 x y\n")
    assert run("cluster", "--out", tmp_path, "--set", "data.source=file", "--set", f"data.path={bad}") == EXIT_DATA


def test_train_predict_evaluate_cycle(tmp_path):
    out = tmp_path / "m"
    assert run("train", "--out", out, *TINY) == EXIT_OK
    assert (out / "checkpoint.npz").exists() and (out / "loss_curve.csv").exists()
    assert run("evaluate", "--out", out, *TINY, "--cs-control", "lsq") == EXIT_OK
    report = json.loads((out / "eval.json").read_text())
    assert report["n"] == 6 and report["control_rule"] == "lsq"
    assert run("predict", "--out", out, *TINY, "--set", "eval.top_k=2") == EXIT_OK
    lines = [l for l in (out / "predictions.txt").read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == 6 * 2 * 12


def test_predict_from_file(tmp_path):
    out = tmp_path / "m"
    assert run("train", "--out", out, *TINY) == EXIT_OK
    obs = tmp_path / "obs.txt"
    obs.write_text("".join(f"{10 * i} 5 {0.5 * i} 0.0\n" for i in range(10)) + "0 6 1.0 1.0\n")
    assert run("predict", "--out", out, *TINY, "--input", obs) == EXIT_OK
    rows = [l.split() for l in (out / "predictions.txt").read_text().splitlines() if not l.startswith("#")]
    assert len(rows) == 12 and rows[0][:3] == ["100", "5", "0"]


def test_evaluate_without_model_is_data_error(tmp_path):
    assert run("evaluate", "--out", tmp_path, *TINY) == EXIT_DATA


def test_evaluate_baseline(tmp_path):
    assert run("evaluate", "--out", tmp_path, *TINY, "--set", "eval.predictor=bank_retrieval") == EXIT_OK
    assert (tmp_path / "eval.csv").exists() and (tmp_path / "report.svg").exists()


def test_synth_round_trip(tmp_path):
    assert run("synth", "--out", tmp_path, "--set", "data.per_group=4") == EXIT_OK
    ds = load_trajectory_file(tmp_path / "trajectories.txt", 8, 12, stride=20)
    assert len(ds) == 12
    assert load_raster(tmp_path / "raster.json").n_cls == 8


def test_report_verb(tmp_path):
    assert run("evaluate", "--out", tmp_path, *TINY, "--set", "eval.predictor=constant_velocity") == EXIT_OK
    assert run("report", tmp_path / "eval.csv", tmp_path / "r.svg", "--samples", 2) == EXIT_OK
    assert (tmp_path / "r.svg").read_text().count('class="observed"') == 2
    (tmp_path / "junk.csv").write_text("a,b\n1,2\n")
    assert run("report", tmp_path / "junk.csv", tmp_path / "x.svg") == EXIT_DATA


def test_bench_search_small(tmp_path, capsys):
    assert run("bench-search", "--out", tmp_path, "--sizes", "50,100", "--queries", 20) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "bench_search.csv").open()))
    assert [r["size"] for r in rows] == ["50", "100"]
    assert "R^2" in capsys.readouterr().out
    assert run("bench-search", "--out", tmp_path, "--sizes", "a,b") == EXIT_CONFIG


def test_bench_rows_and_linear_fit():
    rows = bench_search((10, 20), n_queries=5, repeats=1)
    assert all(r["mean_ns"] > 0 and r["update_mean_ns"] > 0 for r in rows)
    assert linear_fit_r2([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert linear_fit_r2([1, 2, 3], [1, 3, 1]) < 0.1
