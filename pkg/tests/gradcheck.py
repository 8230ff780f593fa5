"""Central-difference check of the full network graph, shared by unit and acceptance tests."""

import numpy as np

from shenet.neural.losses import loss_tra
from shenet.neural.model import ShenetConfig, forward_offsets, init_params
from shenet.trajdata import generate_synthetic_scene


def structurally_zero(name: str) -> bool:
    # adding a constant to every attention logit of a row leaves softmax unchanged,
    # so key-projection biases never receive gradient
    return name.endswith(".k.b")


def setup(seed=0, cfg=None):
    cfg = cfg or ShenetConfig()
    ds = generate_synthetic_scene(3, 2, noise_sigma=0.05, seed=seed)
    tr = ds.trajectories[1]
    P = init_params(cfg, seed)
    cand = tr.future + np.random.default_rng(seed).normal(scale=0.3, size=tr.future.shape)
    return P, tr, ds.scene, cand


def loss_value(P, tr, scene, cand) -> float:
    return loss_tra(forward_offsets(P, tr.past, scene) + cand, tr.future).item()


def sample_coordinates(P, n, rng):
    names = [k for k, _ in P.items() if not structurally_zero(k)]
    sizes = np.array([P[k].data.size for k in names], dtype=float)
    picks = rng.choice(len(names), size=n, p=sizes / sizes.sum())
    return [(names[i], int(rng.integers(P[names[i]].data.size))) for i in picks]


def full_graph_check(n_coords=100, eps=1e-5, seed=0):
    """Worst relative error between reverse-mode and central-difference gradients, plus the per-coordinate records."""
    P, tr, scene, cand = setup(seed)
    P.zero_grad()
    loss_tra(forward_offsets(P, tr.past, scene) + cand, tr.future).backward()
    analytic = {k: t.grad.copy() for k, t in P.items()}
    rng = np.random.default_rng(seed + 1)
    records = []
    for name, flat in sample_coordinates(P, n_coords, rng):
        arr = P[name].data.reshape(-1)
        old = arr[flat]
        arr[flat] = old + eps
        hi = loss_value(P, tr, scene, cand)
        arr[flat] = old - eps
        lo = loss_value(P, tr, scene, cand)
        arr[flat] = old
        num = (hi - lo) / (2 * eps)
        ana = analytic[name].reshape(-1)[flat]
        rel = abs(ana - num) / max(abs(ana), abs(num), 1e-12)
        records.append((name, flat, ana, num, rel))
    return max(r[-1] for r in records), records
