import json

import numpy as np
import pytest

from shenet.bank import init_bank
from shenet.errors import ConfigError, ShapeError, StateError
from shenet.metrics import ade
from shenet.neural.model import ShenetConfig, forward_offsets, init_params
from shenet.pipeline import (ShenetModel, build_dataset, constant_velocity, load_model, lr_at, offsets, predict,
                             resolve_config, run_experiment, train)
from shenet.trajdata import Trajectory, generate_synthetic_scene

TINY = {
    "data": {"n_groups": 3, "per_group": 8, "n_test": 6, "speed_spread": 0.1},
    "bank": {"k": 4, "beta": 4},
    "model": {"d_model": 8, "n_heads": 2, "n_layers_traj": 1, "n_layers_cross": 1, "d_ff": 16, "head_hidden": 8},
    "train": {"epochs": 1},
    "eval": {"svg_samples": 3},
}


def tiny_model(theta=float("inf"), beta=4):
    ds = generate_synthetic_scene(3, 6, noise_sigma=0.05, seed=0, speed_spread=0.1)
    bank = init_bank(ds.trajectories, 4, theta=theta, beta=beta)
    cfg = ShenetConfig(d_model=8, n_heads=2, n_layers_traj=1, n_layers_cross=1, d_ff=16, head_hidden=8)
    return ShenetModel(bank, init_params(cfg, 0)), ds


def test_constant_velocity():
    past = np.stack([np.arange(8.0), 2 * np.arange(8.0)], axis=1)
    fut = constant_velocity(past, 3)
    assert np.allclose(fut, [[8, 16], [9, 18], [10, 20]])


def test_predict_is_candidate_plus_offset():
    model, ds = tiny_model()
    model.bank.freeze()
    for tr in ds.trajectories[:5]:
        preds = predict(model, tr.past, ds.scene, k=3)
        hits = model.bank.topk_search(tr.past, 3)
        off = forward_offsets(model.params, tr.past, ds.scene).data
        assert len(preds) == 3
        for p, h in zip(preds, hits):
            assert np.allclose(p - h.candidate_future, off, atol=1e-12)
        assert np.array_equal(offsets(model, tr.past, ds.scene), off)


def test_predict_requires_frozen_bank():
    model, ds = tiny_model()
    with pytest.raises(StateError):
        predict(model, ds.trajectories[0].past, ds.scene)


def test_train_updates_bank_and_params():
    model, ds = tiny_model(theta=0.0, beta=4)
    before = model.params.copy()
    model, state = train(model, ds.trajectories, epochs=1, lr=1e-3, raster=ds.scene)
    assert state.step == len(ds.trajectories) and state.epoch == 1
    assert not model.params.state_equal(before)
    # theta = 0 adds every example; every fourth addition triggers a merge into one cluster
    assert state.bank_additions == len(ds.trajectories)
    assert state.bank_merges == len(ds.trajectories) // 4
    assert len(model.bank) == 4 + state.clusters_out + model.bank.n_added
    assert np.isfinite(state.converged_train_error)


def test_train_is_deterministic():
    a, ds = tiny_model(theta=0.1)
    b, _ = tiny_model(theta=0.1)
    _, sa = train(a, ds.trajectories, 1, raster=ds.scene, seed=3)
    _, sb = train(b, ds.trajectories, 1, raster=ds.scene, seed=3)
    assert a.params.state_equal(b.params) and a.bank == b.bank and sa == sb


def test_train_rejects_frozen_bank_and_bad_loss():
    model, ds = tiny_model()
    with pytest.raises(ConfigError):
        train(model, ds.trajectories, 1, loss_choice="l1", raster=ds.scene)
    model.bank.freeze()
    with pytest.raises(StateError):
        train(model, ds.trajectories, 1, raster=ds.scene)


def test_cs_loss_trains():
    model, ds = tiny_model()
    _, state = train(model, ds.trajectories, 1, loss_choice="cs", raster=ds.scene)
    assert np.isfinite(state.running_loss)


def test_lr_schedule():
    assert lr_at(5, 10, 0.1) == 0.1
    assert lr_at(0, 10, 0.1, "cosine") == pytest.approx(0.1)
    assert lr_at(5, 10, 0.1, "cosine") == pytest.approx(0.05)
    assert lr_at(10, 10, 0.1, "cosine") == pytest.approx(0.0)
    with pytest.raises(ConfigError):
        lr_at(0, 10, 0.1, "step")


def test_build_dataset_from_file(tmp_path):
    ds = generate_synthetic_scene(2, 6, seed=1)
    from shenet.trajdata import dump_trajectory_file
    dump_trajectory_file(ds, tmp_path / "t.txt")
    cfg = resolve_config({"data": {"source": "file", "path": str(tmp_path / "t.txt"), "n_test": 3, "stride": 20}})
    got = build_dataset(cfg)
    assert len(got.train) == 9 and len(got.test) == 3


def test_run_experiment_artifacts_and_reload(tmp_path):
    report = run_experiment(TINY, tmp_path / "run")
    out = tmp_path / "run"
    for name in ("checkpoint.npz", "bank.json", "loss_curve.csv", "eval.csv", "eval.json", "report.svg",
                 "summary.json", "config.json"):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_test"] == 6 and summary["theta"] == pytest.approx(0.75 * summary["pilot_train_error"])
    assert report.n == 6
    model = load_model(out)
    cfg = resolve_config(TINY)
    ds = build_dataset(cfg)
    tr = ds.test[0]
    pred = predict(model, tr.past, ds.scene)[0]
    assert ade(pred, tr.future) == pytest.approx(report.per_trajectory[0]["ade"], abs=1e-12)


@pytest.mark.parametrize("kind", ["bank_retrieval", "constant_velocity"])
def test_run_experiment_baselines(tmp_path, kind):
    cfg = {**TINY, "eval": {"predictor": kind}}
    report = run_experiment(cfg, tmp_path)
    assert report.n == 6 and np.isfinite(report.aggregate["ade"])
    assert (tmp_path / "bank.json").exists() == (kind == "bank_retrieval")


def test_predict_rejects_wrong_shapes():
    model, ds = tiny_model()
    model.bank.freeze()
    bad = Trajectory(0, np.arange(9), np.zeros((9, 2)), 3, 6)
    with pytest.raises(ShapeError):
        predict(model, bad.past, ds.scene)
