"""Retrieve-then-refine predictor: bank candidate plus network offsets, training loop and experiment runner."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bank import TrajectoryBank, UpdateOutcome, init_bank, load_bank, save_bank
from .errors import ConfigError, DataError, NumericError, StateError
from .metrics import EvalReport, ade, evaluate, write_report
from .neural import autograd as ag
from .neural.losses import loss_cs, loss_tra
from .neural.model import ShenetConfig, ShenetParams, forward_offsets, init_params, load_checkpoint, save_checkpoint
from .neural.optim import Adam
from .smoothing import ControlRule
from .trajdata import Dataset, SceneRaster, generate_synthetic_scene, load_raster, load_trajectory_file, split_dataset


@dataclass
class ShenetModel:
    bank: TrajectoryBank
    params: ShenetParams
    loss: str = "mse"
    control_rule: str = "mid"
    top_k: int = 1
    k_recluster: int | None = None

    def __post_init__(self):
        c = self.params.config
        if (self.bank.t_pas, self.bank.t_fut) != (c.t_pas, c.t_fut):
            raise ConfigError("bank and network disagree on t_pas/t_fut")
        if self.loss not in ("mse", "cs"):
            raise ConfigError(f"unknown loss {self.loss!r}")

    @property
    def config(self) -> ShenetConfig:
        return self.params.config


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    running_loss: float = 0.0
    bank_additions: int = 0
    bank_merges: int = 0
    merged_in: int = 0
    clusters_out: int = 0
    converged_train_error: float | None = None
    epoch_losses: list = field(default_factory=list)


def _raster_grid(model: ShenetModel, raster):
    c = model.config
    if raster is None:
        return np.zeros((c.n_cls, c.h, c.w))
    return getattr(raster, "grid", raster)


def offsets(model: ShenetModel, past, raster) -> np.ndarray:
    with ag.no_grad():
        return forward_offsets(model.params, past, _raster_grid(model, raster)).data.copy()


def predict(model: ShenetModel, past, raster=None, k: int = 1) -> list[np.ndarray]:
    """Top-``k`` bank candidates, each shifted by the network's offsets, in retrieval order."""
    if not model.bank.frozen:
        raise StateError("inference needs a frozen bank; call bank.freeze() after training")
    hits = model.bank.topk_search(past, k)
    off = offsets(model, past, raster)
    return [h.candidate_future + off for h in hits]


def mean_train_ade(model: ShenetModel, trainset, raster=None) -> float:
    errs = []
    for tr in trainset:
        cand = model.bank.search(tr.past).candidate_future
        errs.append(ade(cand + offsets(model, tr.past, raster), tr.future))
    return float(np.mean(errs))


def lr_at(step: int, total: int, lr: float, schedule: str = "constant") -> float:
    """Learning rate for 0-based ``step`` of ``total``; ``cosine`` anneals to zero."""
    if schedule == "constant":
        return lr
    if schedule == "cosine":
        return 0.5 * lr * (1.0 + math.cos(math.pi * step / max(total, 1)))
    raise ConfigError(f"unknown learning-rate schedule {schedule!r}")


def train(model: ShenetModel, trainset, epochs: int, lr: float = 1e-3, loss_choice: str | None = None,
          seed: int = 0, raster=None, log=None, lr_schedule: str = "constant") -> tuple[ShenetModel, TrainState]:
    """Per-example Adam steps interleaved with bank updates; the bank stays unfrozen."""
    state = TrainState()
    if epochs == 0:
        return model, state
    if len(trainset) == 0:
        raise DataError("empty training set")
    if model.bank.frozen:
        raise StateError("cannot train against a frozen bank")
    loss_choice = loss_choice or model.loss
    rule = ControlRule.parse(model.control_rule)
    if loss_choice == "mse":
        loss_fn = loss_tra
    elif loss_choice == "cs":
        loss_fn = lambda p, g: loss_cs(p, g, rule)  # noqa: E731
    else:
        raise ConfigError(f"unknown loss {loss_choice!r}")
    P = model.params
    grid = _raster_grid(model, raster)
    opt = Adam(P, lr=lr)
    rng = np.random.default_rng(seed)
    bank = model.bank
    total_steps = epochs * len(trainset)
    lr_at(0, total_steps, lr, lr_schedule)

    for epoch in range(epochs):
        total = 0.0
        for idx in rng.permutation(len(trainset)):
            tr = trainset[idx]
            cand = bank.search(tr.past).candidate_future
            opt.zero_grad()
            opt.lr = lr_at(state.step, total_steps, lr, lr_schedule)
            pred = forward_offsets(P, tr.past, grid, training=True, rng=rng) + cand
            L = loss_fn(pred, tr.future)
            if not math.isfinite(L.item()):
                raise NumericError(f"non-finite loss at step {state.step}")
            L.backward()
            opt.step()
            total += L.item()
            state.step += 1

            with ag.no_grad():
                post = forward_offsets(P, tr.past, grid).data + cand
            outcome = bank.maybe_update(tr, post, k_recluster=model.k_recluster, seed=seed + state.step)
            if outcome != UpdateOutcome.UNCHANGED:
                state.bank_additions += 1
        state.epoch = epoch + 1
        state.running_loss = total / len(trainset)
        state.epoch_losses.append(state.running_loss)
        if log is not None:
            log(f"epoch {state.epoch}: loss {state.running_loss:.6f}, bank size {len(bank)}")
    state.bank_merges = bank.n_merges
    state.merged_in = bank.merged_in
    state.clusters_out = bank.clusters_out
    state.converged_train_error = mean_train_ade(model, trainset, raster)
    return model, state


# ----- baselines ------------------------------------------------------------

def constant_velocity(past, t_fut: int) -> np.ndarray:
    past = np.asarray(past, dtype=np.float64)
    v = past[-1] - past[-2]
    return past[-1] + v * np.arange(1, t_fut + 1)[:, None]


def constant_velocity_predictor(t_fut: int):
    return lambda past, raster, k: [constant_velocity(past, t_fut)]


def bank_retrieval_predictor(bank: TrajectoryBank):
    return lambda past, raster, k: [h.candidate_future for h in bank.topk_search(past, k)]


def shenet_predictor(model: ShenetModel):
    return lambda past, raster, k: predict(model, past, raster, k)


# ----- experiment runner ----------------------------------------------------

def build_dataset(cfg: dict) -> Dataset:
    d = cfg["data"]
    if d["source"] == "synthetic":
        ds = generate_synthetic_scene(
            d["n_groups"], d["per_group"], d["noise_sigma"], d["seed"], d["t_pas"], d["t_fut"],
            lateral_spread=d["lateral_spread"], speed_spread=d["speed_spread"], phase_spread=d["phase_spread"])
        return split_dataset(ds, d["n_test"], d["seed"])
    ds = load_trajectory_file(d["path"], d["t_pas"], d["t_fut"], d["stride"], units=d["units"])
    scene = load_raster(d["raster_path"]) if d["raster_path"] else SceneRaster.empty()
    if d["test_path"]:
        test = load_trajectory_file(d["test_path"], d["t_pas"], d["t_fut"], d["stride"], units=d["units"])
        trajs = ds.trajectories + test.trajectories
        split = ("train",) * len(ds) + ("test",) * len(test)
        return Dataset(trajs, scene, split, d["units"])
    ds = Dataset(ds.trajectories, scene, units=d["units"])
    return split_dataset(ds, min(d["n_test"], len(ds)), d["seed"])


def network_config(cfg: dict, raster: SceneRaster) -> ShenetConfig:
    m, d = cfg["model"], cfg["data"]
    kw = {f.name: m[f.name] for f in fields(ShenetConfig) if f.name in m}
    return ShenetConfig(t_pas=d["t_pas"], t_fut=d["t_fut"], n_cls=raster.n_cls, h=raster.h, w=raster.w, **kw)


def _new_model(cfg: dict, train_set, raster, theta: float) -> ShenetModel:
    b = cfg["bank"]
    bank = init_bank(train_set, b["k"], b["max_iter"], b["seed"], theta=theta, beta=b["beta"],
                     k_recluster=b["k_recluster"], translate=b["translate"], init=b["init"])
    params = init_params(network_config(cfg, raster), cfg["model"]["seed"])
    return ShenetModel(bank, params, cfg["train"]["loss"], cfg["eval"]["control_rule"], cfg["eval"]["top_k"],
                       b["k_recluster"])


def train_from_config(cfg: dict, dataset: Dataset, log=None):
    """Initialise and train a model; resolves ``theta='auto'`` with a pilot run. Returns (model, state, info)."""
    t = cfg["train"]
    train_set = dataset.train
    if not train_set:
        raise DataError("no training trajectories")
    info = {}
    theta = cfg["bank"]["theta"]
    if theta == "auto":
        pilot = _new_model(cfg, train_set, dataset.scene, math.inf)
        pilot_epochs = t["pilot_epochs"] if t["pilot_epochs"] is not None else t["epochs"]
        _, pstate = train(pilot, train_set, pilot_epochs, t["lr"], t["loss"], t["seed"], dataset.scene, log,
                          t["lr_schedule"])
        err = pstate.converged_train_error if pstate.converged_train_error is not None else mean_train_ade(pilot, train_set, dataset.scene)
        info["pilot_train_error"] = err
        theta = cfg["bank"]["theta_fraction"] * err
    info["theta"] = theta
    model = _new_model(cfg, train_set, dataset.scene, theta)
    info["initial_bank_size"] = len(model.bank)
    model, state = train(model, train_set, t["epochs"], t["lr"], t["loss"], t["seed"], dataset.scene, log,
                         t["lr_schedule"])
    info["final_bank_size"] = len(model.bank)
    return model, state, info


def _predictor_for(cfg: dict, model: ShenetModel | None, bank: TrajectoryBank | None, t_fut: int):
    kind = cfg["eval"]["predictor"]
    if kind == "constant_velocity":
        return constant_velocity_predictor(t_fut)
    if kind == "bank_retrieval":
        return bank_retrieval_predictor(bank)
    return shenet_predictor(model)


def resolve_config(config=None, overrides=()) -> dict:
    """``config`` is a path, a dict of sections, or None for defaults."""
    if isinstance(config, dict):
        return cfgmod.load_config(None, overrides, base=cfgmod.merge(cfgmod.defaults(), config))
    return cfgmod.load_config(config, overrides)


def train_and_save(cfg: dict, dataset: Dataset, out, log=None) -> tuple[ShenetModel, dict]:
    """Train, freeze the bank and write checkpoint.npz, bank.json and loss_curve.csv into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    model, state, info = train_from_config(cfg, dataset, log)
    model.bank.freeze()
    save_checkpoint(model.params, out / "checkpoint.npz")
    save_bank(model.bank, out / "bank.json")
    with open(out / "loss_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(state.epoch_losses, start=1):
            w.writerow([i, repr(v)])
    info["train_state"] = asdict(state)
    return model, info


def evaluate_and_save(cfg: dict, dataset: Dataset, predictor, out) -> EvalReport:
    """Score ``predictor`` on the test split; writes eval.csv, eval.json and report.svg."""
    from .report import render_report_svg

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if not dataset.test:
        raise DataError("no test trajectories")
    e = cfg["eval"]
    report = evaluate(dataset.test, predictor, e["top_k"], e["control_rule"], raster=dataset.scene,
                      smooth_pred=e["smooth_pred"])
    write_report(report, out / "eval.csv", out / "eval.json")
    (out / "report.svg").write_text(render_report_svg(report, n_samples=e["svg_samples"]))
    return report


def run_experiment(config=None, out_dir=None, overrides=(), log=None) -> EvalReport:
    """Data, bank, training, freeze, evaluation; every artifact lands in ``output.dir``."""
    cfg = resolve_config(config, overrides)
    out = Path(out_dir if out_dir is not None else cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(cfg)
    if not dataset.test:
        raise DataError("no test trajectories")
    kind = cfg["eval"]["predictor"]
    summary = {"predictor": kind, "n_train": len(dataset.train), "n_test": len(dataset.test)}
    model = bank = None
    if kind == "shenet":
        model, info = train_and_save(cfg, dataset, out, log)
        bank = model.bank
        summary.update(info)
    elif kind == "bank_retrieval":
        b = cfg["bank"]
        bank = init_bank(dataset.train, b["k"], b["max_iter"], b["seed"], translate=b["translate"], init=b["init"]).freeze()
        save_bank(bank, out / "bank.json")
    report = evaluate_and_save(cfg, dataset, _predictor_for(cfg, model, bank, cfg["data"]["t_fut"]), out)
    summary["aggregate"] = report.aggregate
    (out / "summary.json").write_text(json.dumps(summary, indent=1, default=float))
    (out / "config.json").write_text(json.dumps(cfg, indent=1, default=float))
    return report


def load_model(out_dir, cfg: dict | None = None) -> ShenetModel:
    out = Path(out_dir)
    bank = load_bank(out / "bank.json")
    params = load_checkpoint(out / "checkpoint.npz")
    kw = {}
    if cfg is not None:
        kw = dict(loss=cfg["train"]["loss"], control_rule=cfg["eval"]["control_rule"], top_k=cfg["eval"]["top_k"])
    return ShenetModel(bank, params, **kw)
