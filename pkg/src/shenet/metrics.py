"""Displacement errors, their curve-smoothed variants, best-of-K and evaluation reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError, ShapeError
from .smoothing import ControlRule, smooth_trajectory

METRICS = ("ade", "fde", "cs_ade", "cs_fde")


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 2 or len(pred) == 0:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} must both be (T, 2)")
    return pred, gt


def ade(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    return float(np.mean(np.linalg.norm(pred - gt, axis=1)))


def fde(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    return float(np.linalg.norm(pred[-1] - gt[-1]))


def _smoothed_target(gt, control_rule):
    gt = np.asarray(gt, dtype=np.float64)
    if len(gt) < 2:
        return gt
    return smooth_trajectory(gt, control_rule)


def cs_ade(pred, gt, control_rule="mid", smooth_pred: bool = False) -> float:
    """ADE against the Bezier-smoothed ground truth; the prediction is scored raw unless ``smooth_pred``."""
    pred, gt = _pair(pred, gt)
    if smooth_pred:
        pred = _smoothed_target(pred, control_rule)
    return ade(pred, _smoothed_target(gt, control_rule))


def cs_fde(pred, gt, control_rule="mid", smooth_pred: bool = False) -> float:
    pred, gt = _pair(pred, gt)
    if smooth_pred:
        pred = _smoothed_target(pred, control_rule)
    return fde(pred, _smoothed_target(gt, control_rule))


def best_of_k(preds: Sequence, gt, metric: Callable = ade) -> float:
    if len(preds) == 0:
        raise EvaluationError("best_of_k needs at least one prediction")
    return min(metric(p, gt) for p in preds)


@dataclass
class EvalReport:
    per_trajectory: list  # dicts with person_id, ade, fde, cs_ade, cs_fde
    best_of_k: int
    control_rule: str = "mid"
    samples: list = field(default_factory=list)  # (past, best prediction, gt) per trajectory

    @property
    def n(self) -> int:
        return len(self.per_trajectory)

    @property
    def aggregate(self) -> dict:
        if not self.per_trajectory:
            return {m: float("nan") for m in METRICS}
        return {m: float(np.mean([r[m] for r in self.per_trajectory])) for m in METRICS}

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "best_of_k": self.best_of_k,
            "control_rule": self.control_rule,
            "aggregate": self.aggregate,
            "per_trajectory": self.per_trajectory,
        }

    def to_csv(self) -> str:
        """One row per trajectory plus a final ``aggregate`` row.

        Coordinates of the observed, best predicted and true paths travel in
        space-separated ``x y x y ...`` columns so plots can be rebuilt from the CSV.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "person_id", *METRICS, "past", "pred", "gt"])
        for i, r in enumerate(self.per_trajectory):
            past, pred, gt = self.samples[i] if i < len(self.samples) else (None, None, None)
            w.writerow([i, r["person_id"], *(repr(r[m]) for m in METRICS), _flat(past), _flat(pred), _flat(gt)])
        agg = self.aggregate
        w.writerow(["aggregate", "", *(repr(agg[m]) for m in METRICS), "", "", ""])
        return buf.getvalue()


def _flat(a):
    if a is None:
        return ""
    return " ".join(repr(float(v)) for v in np.asarray(a).ravel())


def parse_flat(s: str) -> np.ndarray:
    s = s.strip()
    if not s:
        return np.zeros((0, 2))
    v = np.array([float(x) for x in s.split()])
    if v.size % 2:
        raise ValueError("odd number of coordinates")
    return v.reshape(-1, 2)


def score_predictions(preds, gt, control_rule="mid", smooth_pred: bool = False) -> dict:
    """Best-of-K value of every metric (each minimised independently)."""
    rule = ControlRule.parse(control_rule)
    target = _smoothed_target(gt, rule)
    if smooth_pred:
        preds = [_smoothed_target(p, rule) for p in preds]
    return {
        "ade": best_of_k(preds, gt, ade),
        "fde": best_of_k(preds, gt, fde),
        "cs_ade": best_of_k(preds, target, ade),
        "cs_fde": best_of_k(preds, target, fde),
    }


def evaluate(test_trajectories, predictor, k: int = 1, control_rule="mid", raster=None,
             smooth_pred: bool = False) -> EvalReport:
    """Run ``predictor(past, raster, k)`` on every trajectory and score its best-of-``k`` output."""
    rule = ControlRule.parse(control_rule)
    rows, samples = [], []
    for idx, traj in enumerate(test_trajectories):
        preds = predictor(traj.past, raster, k)
        preds = [np.asarray(p, dtype=np.float64) for p in preds]
        if not preds or len(preds) > k or any(p.shape != traj.future.shape for p in preds):
            shapes = [p.shape for p in preds]
            raise EvaluationError(
                f"trajectory {idx} (person {traj.person_id}): predictor returned {len(preds)} futures "
                f"with shapes {shapes}, expected 1..{k} of {traj.future.shape}"
            )
        row = {"person_id": int(traj.person_id), **score_predictions(preds, traj.future, rule, smooth_pred)}
        if not all(np.isfinite(row[m]) for m in METRICS):
            raise EvaluationError(f"trajectory {idx}: non-finite metric")
        rows.append(row)
        best = min(preds, key=lambda p: ade(p, traj.future))
        samples.append((traj.past.copy(), best, traj.future.copy()))
    return EvalReport(rows, k, str(rule), samples)


def scene_average(reports: Sequence[EvalReport]) -> dict:
    """Unweighted mean of per-scene aggregates (the AVG column convention)."""
    return {m: float(np.mean([r.aggregate[m] for r in reports])) for m in METRICS}


def write_report(report: EvalReport, csv_path=None, json_path=None) -> None:
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv())
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=1)
