"""Command-line entry points: ``shenet <verb> [--config FILE] [--set section.key=value ...]``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bank import TrajectoryBank, cluster_trajectories, init_bank, save_bank
from .errors import (ConfigError, DataError, EvaluationError, FrozenBankError, GraphError, NumericError, ShapeError,
                     StateError, UndefinedSimilarityError)
from .pipeline import (_predictor_for, build_dataset, evaluate_and_save, load_model, predict, resolve_config,
                       run_experiment, train_and_save)
from .report import cmd_report
from .trajdata import Trajectory, dump_trajectory_file, generate_synthetic_scene, load_raster, read_tracks, save_raster

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _out_dir(cfg, args) -> Path:
    out = Path(args.out if getattr(args, "out", None) else cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----- verbs ----------------------------------------------------------------

def cmd_cluster(cfg: dict, out: Path) -> dict:
    """Build the initial bank; writes bank.json and clusters.csv (size and mean distance to the cluster mean)."""
    b = cfg["bank"]
    ds = build_dataset(cfg)
    train = ds.train
    if b["k"] > len(train):
        raise ConfigError(f"bank.k={b['k']} exceeds the {len(train)} training trajectories")
    Z, res = cluster_trajectories(train, b["k"], b["max_iter"], b["seed"], b["init"])
    bank = init_bank(train, b["k"], theta=b["theta"] if b["theta"] != "auto" else float("inf"), beta=b["beta"],
                     k_recluster=b["k_recluster"], translate=b["translate"], clustering=(Z, res))
    save_bank(bank, out / "bank.json")
    with open(out / "clusters.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "medoid", "size", "mean_distance"])
        for c, m in enumerate(res.medoids):
            members = Z[res.labels == c]
            if len(members) == 0:
                continue
            dist = np.linalg.norm(members - members.mean(axis=0), axis=1).mean()
            w.writerow([c, int(m), len(members), repr(float(dist))])
    print(f"K={b['k']} entries={len(bank)} cost={res.cost:.6g} iterations={res.n_iter}")
    return {"k": b["k"], "entries": len(bank), "cost": res.cost}


def cmd_train(cfg: dict, out: Path):
    ds = build_dataset(cfg)
    model, info = train_and_save(cfg, ds, out, log=print)
    (out / "train_summary.json").write_text(json.dumps(info, indent=1, default=float))
    (out / "config.json").write_text(json.dumps(cfg, indent=1, default=float))
    print(f"theta={info['theta']:.6g} bank {info['initial_bank_size']} -> {info['final_bank_size']} entries")
    return model


def _load_if_needed(cfg, out, model_dir):
    if cfg["eval"]["predictor"] != "shenet":
        return None
    src = Path(model_dir) if model_dir else out
    if not (src / "checkpoint.npz").exists():
        raise DataError(f"no trained model in {src}; run 'shenet train' first")
    return load_model(src, cfg)


def cmd_evaluate(cfg: dict, out: Path, model_dir=None):
    ds = build_dataset(cfg)
    model = _load_if_needed(cfg, out, model_dir)
    bank = model.bank if model is not None else None
    if cfg["eval"]["predictor"] == "bank_retrieval":
        b = cfg["bank"]
        bank = init_bank(ds.train, b["k"], b["max_iter"], b["seed"], translate=b["translate"], init=b["init"]).freeze()
    report = evaluate_and_save(cfg, ds, _predictor_for(cfg, model, bank, cfg["data"]["t_fut"]), out)
    print(" ".join(f"{k}={v:.4f}" for k, v in report.aggregate.items()))
    return report


def cmd_predict(cfg: dict, out: Path, input_path=None, model_dir=None):
    """Predict futures from the last ``t_pas`` points of every track in ``input_path`` (default: the test split)."""
    t_pas, t_fut = cfg["data"]["t_pas"], cfg["data"]["t_fut"]
    if input_path:
        queries = []
        for pid, (frames, xy) in read_tracks(input_path).items():
            if len(frames) < t_pas:
                print(f"skipping pedestrian {pid}: {len(frames)} points < t_pas={t_pas}", file=sys.stderr)
                continue
            queries.append((pid, frames[-t_pas:], xy[-t_pas:]))
        raster = load_raster(cfg["data"]["raster_path"]) if cfg["data"]["raster_path"] else None
    else:
        ds = build_dataset(cfg)
        queries = [(q.person_id, q.frames[:t_pas], q.past) for q in ds.test]
        raster = ds.scene
    model = _load_if_needed(cfg, out, model_dir)
    if model is None:
        raise ConfigError("predict needs eval.predictor = 'shenet'")
    k = cfg["eval"]["top_k"]
    path = out / "predictions.txt"
    n = 0
    with open(path, "w") as fh:
        fh.write("# frame_id ped_id candidate x y\n")
        for pid, frames, past in queries:
            step = int(frames[-1] - frames[-2]) if len(frames) > 1 else 1
            future_frames = frames[-1] + step * np.arange(1, t_fut + 1)
            for c, fut in enumerate(predict(model, past, raster, k)):
                for f, (x, y) in zip(future_frames, fut):
                    fh.write(f"{int(f)} {pid} {c} {float(x)!r} {float(y)!r}\n")
                    n += 1
    print(f"wrote {len(queries)} x {k} predicted futures to {path}")
    return n


def cmd_synth(cfg: dict, out: Path):
    d = cfg["data"]
    ds = generate_synthetic_scene(d["n_groups"], d["per_group"], d["noise_sigma"], d["seed"], d["t_pas"], d["t_fut"],
                                  lateral_spread=d["lateral_spread"], speed_spread=d["speed_spread"],
                                  phase_spread=d["phase_spread"])
    dump_trajectory_file(ds, out / "trajectories.txt")
    save_raster(ds.scene, out / "raster.json")
    print(f"wrote {len(ds)} trajectories and a {ds.scene.n_cls}x{ds.scene.h}x{ds.scene.w} raster to {out}")
    return ds


# ----- search/update complexity benchmark ----------------------------------

def _random_bank(size: int, t_pas: int, t_fut: int, rng) -> TrajectoryBank:
    bank = TrajectoryBank(t_pas, t_fut, theta=0.0, capacity=2 * size + 16)
    for p, f in zip(rng.normal(size=(size, t_pas, 2)), rng.normal(size=(size, t_fut, 2))):
        bank.add(p, f)
    return bank


def bench_search(sizes=(100, 1000, 10000), n_queries: int = 1000, seed: int = 0, t_pas: int = 8, t_fut: int = 12,
                 repeats: int = 3):
    """Mean search and update wall time (ns) per bank size; each figure is the best of ``repeats`` passes."""
    rng = np.random.default_rng(seed)
    queries = rng.normal(size=(n_queries, t_pas, 2))
    futures = rng.normal(size=(n_queries, t_fut, 2))
    rows = []
    for size in sizes:
        bank = _random_bank(size, t_pas, t_fut, rng)
        best_search = best_update = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter_ns()
            for q in queries:
                bank.search(q)
            best_search = min(best_search, (time.perf_counter_ns() - t0) / n_queries)
            # theta = 0 makes every update an append; capacity is reserved, so none trigger a regrow
            bank._truncate(size)
            bank._grow(size + n_queries)
            trajs = [Trajectory(0, np.arange(t_pas + t_fut), np.concatenate([q, f]), t_pas, t_fut)
                     for q, f in zip(queries, futures)]
            t0 = time.perf_counter_ns()
            for tr in trajs:
                bank.maybe_update(tr, tr.future + 1.0)
            best_update = min(best_update, (time.perf_counter_ns() - t0) / n_queries)
            bank._truncate(size)
            bank.n_added = 0
        rows.append({"size": size, "mean_ns": best_search, "update_mean_ns": best_update})
    return rows


def linear_fit_r2(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(((y - A @ coef) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def cmd_bench_search(out: Path, sizes=(100, 1000, 10000), n_queries: int = 1000, seed: int = 0) -> dict:
    rows = bench_search(sizes, n_queries, seed)
    with open(out / "bench_search.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["size", "mean_ns", "update_mean_ns"])
        for r in rows:
            w.writerow([r["size"], f"{r['mean_ns']:.1f}", f"{r['update_mean_ns']:.1f}"])
    r2 = linear_fit_r2([r["size"] for r in rows], [r["mean_ns"] for r in rows])
    upd = [r["update_mean_ns"] for r in rows]
    ratio = max(upd) / min(upd)
    for r in rows:
        print(f"size {r['size']:>6}: search {r['mean_ns']:10.0f} ns, update {r['update_mean_ns']:8.0f} ns")
    print(f"search linear fit R^2 = {r2:.4f}; update time ratio max/min = {ratio:.3f}")
    return {"rows": rows, "r2": r2, "update_ratio": ratio}


# ----- argument parsing -----------------------------------------------------

VERBS = {
    "cluster": "build the group trajectory bank and a cluster summary CSV",
    "train": "train the refinement network against an evolving bank",
    "predict": "write predicted futures for observed tracks",
    "evaluate": "score a predictor on the test split (CSV, JSON, SVG)",
    "run": "train and evaluate in one go",
    "bench-search": "time bank search and update across bank sizes",
    "synth": "write a synthetic scene as a trajectory file plus raster",
    "report": "draw an SVG from an evaluation CSV",
}


def build_parser() -> argparse.ArgumentParser:
    epilog = "configuration keys (override with --set section.key=value):\n" + cfgmod.describe()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="shenet", description="Scene-history trajectory prediction toolkit.",
                                     epilog=epilog, formatter_class=fmt)
    sub = parser.add_subparsers(dest="verb", required=True, metavar="verb")
    for verb, help_text in VERBS.items():
        p = sub.add_parser(verb, help=help_text, description=help_text, epilog=epilog, formatter_class=fmt)
        if verb == "report":
            p.add_argument("eval_csv", help="CSV written by 'evaluate'")
            p.add_argument("out_svg", help="output SVG path")
            p.add_argument("--samples", type=int, default=6, help="trajectories to draw")
            continue
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
        p.add_argument("--out", help="output directory (default: output.dir)")
        if verb in ("predict", "evaluate"):
            p.add_argument("--model-dir", help="directory holding checkpoint.npz and bank.json (default: --out)")
        if verb == "predict":
            p.add_argument("--input", help="trajectory file of observed tracks (default: the test split)")
        if verb == "evaluate":
            p.add_argument("--cs-control", help="Bezier control rule: mid | lsq | literal:<t0>")
        if verb == "bench-search":
            p.add_argument("--sizes", default="100,1000,10000", help="comma-separated bank sizes")
            p.add_argument("--queries", type=int, default=1000)
    return parser


def dispatch(args) -> int:
    if args.verb == "report":
        n = cmd_report(args.eval_csv, args.out_svg, args.samples)
        print(f"wrote {args.out_svg} with {n} trajectories")
        return EXIT_OK
    overrides = list(args.overrides)
    if getattr(args, "cs_control", None):
        overrides.append(f"eval.control_rule={args.cs_control}")
    cfg = resolve_config(args.config, overrides)
    out = _out_dir(cfg, args)
    if args.verb == "cluster":
        cmd_cluster(cfg, out)
    elif args.verb == "train":
        cmd_train(cfg, out)
    elif args.verb == "evaluate":
        cmd_evaluate(cfg, out, args.model_dir)
    elif args.verb == "predict":
        cmd_predict(cfg, out, args.input, args.model_dir)
    elif args.verb == "run":
        report = run_experiment(cfg, out, log=print)
        print(" ".join(f"{k}={v:.4f}" for k, v in report.aggregate.items()))
    elif args.verb == "synth":
        cmd_synth(cfg, out)
    elif args.verb == "bench-search":
        try:
            sizes = tuple(int(s) for s in args.sizes.split(","))
        except ValueError:
            raise ConfigError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
        cmd_bench_search(out, sizes, args.queries, cfg["data"]["seed"])
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, GraphError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ShapeError, EvaluationError, UndefinedSimilarityError, StateError, FrozenBankError,
            OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
