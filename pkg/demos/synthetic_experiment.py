"""Train and score the refiner against both baselines on a small synthetic scene.

    python demos/synthetic_experiment.py [out_dir]

The full-size version of this comparison is configs/synthetic.json (a few minutes).
"""

import sys

from shenet.pipeline import run_experiment

SMALL = {
    "data": {"per_group": 60, "n_test": 30, "lateral_spread": 0.15, "speed_spread": 0.1, "phase_spread": 0.3},
    "bank": {"k": 12, "beta": 8},
    "train": {"epochs": 2, "pilot_epochs": 1, "lr_schedule": "cosine"},
}


def main(out="runs/demo"):
    rows = []
    for kind in ("constant_velocity", "bank_retrieval", "shenet"):
        cfg = {**SMALL, "eval": {"predictor": kind}}
        rep = run_experiment(cfg, f"{out}/{kind}")
        rows.append((kind, rep.aggregate))
    print(f"{'predictor':20s} {'ADE':>7s} {'FDE':>7s} {'CS-ADE':>7s} {'CS-FDE':>7s}")
    for kind, agg in rows:
        print(f"{kind:20s} {agg['ade']:7.3f} {agg['fde']:7.3f} {agg['cs_ade']:7.3f} {agg['cs_fde']:7.3f}")
    print(f"\nreport SVGs are under {out}/<predictor>/report.svg")


if __name__ == "__main__":
    main(*sys.argv[1:])
