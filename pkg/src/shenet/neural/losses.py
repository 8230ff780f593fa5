"""Trajectory regression losses."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..smoothing import smooth_trajectory
from . import autograd as ag
from .autograd import Tensor


def loss_tra(pred: Tensor, gt) -> Tensor:
    """Mean over time steps of the squared L2 error."""
    pred = ag.as_tensor(pred)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ShapeError(f"prediction {pred.shape} and target {gt.shape} differ")
    diff = pred - gt
    return ag.tsum(diff * diff) * (1.0 / len(gt))


def loss_cs(pred: Tensor, gt, control_rule="mid") -> Tensor:
    """``loss_tra`` against the Bezier-smoothed target; the target is a constant."""
    gt = np.asarray(gt, dtype=np.float64)
    if gt.ndim != 2 or ag.as_tensor(pred).shape != gt.shape:
        raise ShapeError(f"prediction {ag.as_tensor(pred).shape} and target {gt.shape} differ")
    return loss_tra(pred, smooth_trajectory(gt, control_rule))


LOSSES = {"mse": loss_tra, "cs": loss_cs}
