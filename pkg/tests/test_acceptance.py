"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The synthetic-experiment criteria (6, 7, 8, 10) share a module-scoped cache of
runs over configs/synthetic.json, so the whole file takes a few minutes.
"""

import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from acceptance_log import record
from gradcheck import full_graph_check
from shenet.bank import TrajectoryBank
from shenet.cli import cmd_bench_search
from shenet.kmedoids import clustering_cost, kmedoids, pairwise_distances
from shenet.metrics import ade, cs_ade, cs_fde
from shenet.neural.losses import loss_tra
from shenet.pipeline import run_experiment
from shenet.smoothing import bezier_spec_for, smooth_trajectory

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "synthetic.json"


def test_c1_kmedoids_matches_enumeration():
    rng = np.random.default_rng(2024)
    X = rng.normal(size=(10, 20, 2)).cumsum(axis=1)
    D = pairwise_distances(X)
    t0 = time.perf_counter()
    res = kmedoids(D, 2)
    elapsed = time.perf_counter() - t0
    best = min(clustering_cost(D, pair) for pair in itertools.combinations(range(10), 2))
    gap = abs(res.cost - best)
    ok = record(1, gap <= 1e-9 and elapsed < 1.0, f"cost {res.cost:.12g} vs optimum {best:.12g}, {elapsed * 1e3:.1f} ms")
    assert ok


def _brute_cosine(pasts, q):
    best_i, best_s = -1, -np.inf
    qf = q.ravel()
    for i, p in enumerate(pasts):
        pf = p.ravel()
        s = float(np.dot(pf, qf) / (np.linalg.norm(pf) * np.linalg.norm(qf)))
        if s > best_s:
            best_i, best_s = i, s
    return best_i, best_s


def test_c2_retrieval_matches_brute_force():
    rng = np.random.default_rng(7)
    bank = TrajectoryBank(8, 12)
    pasts = rng.normal(size=(32, 8, 2))
    for p in pasts:
        bank.add(p, rng.normal(size=(12, 2)))
    bank.freeze()
    worst, mismatches = 0.0, 0
    for q in rng.normal(size=(1000, 8, 2)):
        hit = bank.search(q)
        i, s = _brute_cosine(pasts, q)
        mismatches += hit.index != i
        worst = max(worst, abs(hit.score - s))
    self_dev = max(abs(bank.search(p).score - 1.0) for p in pasts)
    ok = record(2, mismatches == 0 and worst <= 1e-12 and self_dev <= 1e-9,
                f"argmax mismatches {mismatches}, max score diff {worst:.1e}, self-query deviation {self_dev:.1e}")
    assert ok


def test_c3_full_graph_gradients():
    t0 = time.perf_counter()
    worst, records = full_graph_check(n_coords=100, eps=1e-5, seed=0)
    elapsed = time.perf_counter() - t0
    ok = record(3, worst < 1e-4 and elapsed < 60.0 and len(records) == 100,
                f"worst relative error {worst:.2e} over {len(records)} coordinates, {elapsed:.1f} s")
    assert ok


def _in_triangle(p, a, b, c, tol):
    T = np.column_stack([b - a, c - a])
    if abs(np.linalg.det(T)) < 1e-12:
        # degenerate hull: the curve must lie on the segment spanned by the control points
        pts = np.stack([a, b, c])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))
    l1, l2 = np.linalg.solve(T, p - a)
    bary = np.array([1 - l1 - l2, l1, l2])
    # barycentric slack converted to a distance bound through the triangle's size
    scale = max(np.linalg.norm(b - a), np.linalg.norm(c - a), 1.0)
    return bool(np.all(bary >= -tol / scale))


@pytest.mark.parametrize("rule", ["mid", "lsq", "literal:0.3"])
def test_c4_smoothing_invariants(rule):
    rng = np.random.default_rng(11)
    endpoint_ok, affine_worst, hull_ok = True, 0.0, True
    for _ in range(100):
        n = int(rng.integers(3, 21))
        pts = rng.normal(scale=5.0, size=(n, 2)).cumsum(axis=0)
        sm = smooth_trajectory(pts, rule)
        endpoint_ok &= bool(np.array_equal(sm[0], pts[0]) and np.array_equal(sm[-1], pts[-1]))
        A = rng.normal(size=(2, 2))
        b = rng.normal(size=2)
        affine_worst = max(affine_worst, float(np.abs(smooth_trajectory(pts @ A.T + b, rule) - (sm @ A.T + b)).max()))
        spec = bezier_spec_for(pts, rule)
        hull_ok &= all(_in_triangle(p, spec.start, spec.control, spec.end, 1e-9) for p in sm)
    ok = record(4, endpoint_ok and affine_worst <= 1e-9 and hull_ok,
                f"[{rule}] endpoints exact {endpoint_ok}, affine error {affine_worst:.1e}, hull {hull_ok}")
    assert ok


def test_c5_metric_hand_cases():
    gt = np.random.default_rng(3).normal(size=(12, 2))
    pred = gt + np.array([3.0, 4.0])
    a = ade(pred, gt)
    lt = loss_tra(pred, gt).item()
    sm = smooth_trajectory(gt)
    c1, c2 = cs_ade(sm, gt), cs_fde(sm, gt)
    ok = record(5, a == 5.0 and lt == 25.0 and c1 == 0.0 and c2 == 0.0,
                f"ADE {a!r}, L_tra {lt!r}, CS-ADE {c1!r}, CS-FDE {c2!r}")
    assert ok


class Runs:
    """Lazily executed synthetic experiments keyed by a tag."""

    def __init__(self, root: Path):
        self.root = root
        self.cache = {}

    def get(self, tag, overrides=()):
        if tag not in self.cache:
            out = self.root / tag
            t0 = time.perf_counter()
            report = run_experiment(str(CONFIG), out, list(overrides))
            summary = json.loads((out / "summary.json").read_text())
            self.cache[tag] = (report, summary, time.perf_counter() - t0, out)
        return self.cache[tag]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


def test_c6_synthetic_end_to_end(runs):
    cv, _, t_cv, _ = runs.get("cv", ["eval.predictor=constant_velocity"])
    ret, _, t_ret, _ = runs.get("retrieval", ["eval.predictor=bank_retrieval"])
    full, summary, t_full, _ = runs.get("main")
    assert summary["n_train"] == 500 and summary["n_test"] == 100
    total = t_cv + t_ret + t_full
    ratio = ret.aggregate["fde"] / cv.aggregate["fde"]
    gain = 1.0 - full.aggregate["ade"] / ret.aggregate["ade"]
    ok_a = record("6a", ratio <= 0.5,
                  f"retrieval FDE {ret.aggregate['fde']:.4f} = {ratio:.1%} of constant-velocity FDE {cv.aggregate['fde']:.4f}")
    ok_b = record("6b", full.aggregate["ade"] <= ret.aggregate["ade"] and total < 300.0,
                  f"refined ADE {full.aggregate['ade']:.4f} vs retrieval {ret.aggregate['ade']:.4f} "
                  f"({gain:.1%} better, target 10% {'met' if gain >= 0.10 else 'missed'}), runtime {total:.0f} s")
    assert ok_a and ok_b


def test_c7_theta_sweep(runs):
    base, summary, _, _ = runs.get("main")
    pilot = summary["pilot_train_error"]
    ades = {0.75: base.aggregate["ade"]}
    for f in (0.25, 1.0):
        ades[f] = runs.get(f"theta_{f}", [f"bank.theta={f * pilot!r}"])[0].aggregate["ade"]
    ok = record(7, ades[0.75] <= ades[0.25] and ades[0.75] <= ades[1.0],
                "ADE by theta fraction: " + ", ".join(f"{f}x {ades[f]:.4f}" for f in sorted(ades))
                + f" (pilot error {pilot:.4f})")
    assert ok


def test_c8_k_sweep(runs):
    ades = {32: runs.get("main")[0].aggregate["ade"]}
    for k in (24, 28, 36):
        ades[k] = runs.get(f"k_{k}", [f"bank.k={k}"])[0].aggregate["ade"]
    spread = (max(ades.values()) - min(ades.values())) / min(ades.values())
    ok = record(8, spread < 0.10, "ADE by K: " + ", ".join(f"{k} {ades[k]:.4f}" for k in sorted(ades))
                + f", spread {spread:.1%}")
    assert ok


def test_c9_search_complexity(tmp_path, capsys):
    res = cmd_bench_search(tmp_path, sizes=(100, 1000, 10000), n_queries=1000)
    capsys.readouterr()
    ok = record(9, res["r2"] > 0.9 and 0.5 <= res["update_ratio"] <= 2.0,
                f"search fit R^2 {res['r2']:.4f}, update time ratio {res['update_ratio']:.3f}")
    assert ok


def test_c10_determinism(runs):
    _, _, _, first = runs.get("main")
    _, _, _, second = runs.get("main_again")
    same_csv = (first / "eval.csv").read_bytes() == (second / "eval.csv").read_bytes()
    same_svg = (first / "report.svg").read_bytes() == (second / "report.svg").read_bytes()
    ok = record(10, same_csv and same_svg, f"eval.csv identical {same_csv}, report.svg identical {same_svg}")
    assert ok
