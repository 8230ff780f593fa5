"""Compare plain and curve-smoothed displacement errors on a jittery ground truth.

    python demos/smoothing_metrics.py
"""

import numpy as np

from shenet.metrics import ade, cs_ade, cs_fde, fde
from shenet.smoothing import bezier_spec_for, smooth_trajectory


def main():
    rng = np.random.default_rng(4)
    t = np.linspace(0, 1, 12)
    curve = np.stack([6 * t, 2 * t**2], axis=1)
    gt = curve + rng.normal(scale=0.15, size=curve.shape)

    for rule in ("mid", "lsq", "literal:0.5"):
        spec = bezier_spec_for(gt, rule)
        sm = smooth_trajectory(gt, rule)
        print(f"{rule:12s} control {np.round(spec.control, 3)}  mean jitter removed {ade(sm, gt):.3f}")

    # score a prediction that follows the noise-free curve against both targets
    pred = curve
    print(f"\nclean-curve prediction: ADE {ade(pred, gt):.3f}  FDE {fde(pred, gt):.3f}")
    print(f"                        CS-ADE {cs_ade(pred, gt):.3f}  CS-FDE {cs_fde(pred, gt):.3f}")


if __name__ == "__main__":
    main()
