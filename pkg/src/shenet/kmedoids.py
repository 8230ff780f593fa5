"""PAM K-medoids over a precomputed distance matrix (greedy BUILD, then best-improvement SWAP)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class KMedoidsResult:
    medoids: np.ndarray  # indices into the data, one per cluster
    labels: np.ndarray  # cluster id per point
    cost: float
    n_iter: int
    history: list  # objective after BUILD and after each swap


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of ``X`` (flattened trajectories)."""
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    sq = np.einsum("ij,ij->i", X, X)
    D2 = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D2, 0.0, out=D2)
    D = np.sqrt(D2)
    np.fill_diagonal(D, 0.0)
    return D


def clustering_cost(D: np.ndarray, medoids) -> float:
    return float(D[:, np.asarray(medoids)].min(axis=1).sum())


def _build(D: np.ndarray, k: int) -> list[int]:
    n = len(D)
    first = int(np.argmin(D.sum(axis=1)))
    medoids = [first]
    nearest = D[:, first].copy()
    for _ in range(1, k):
        # gain of adding candidate c: sum_j max(nearest_j - D[j, c], 0)
        gain = np.maximum(nearest[:, None] - D, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        c = int(np.argmax(gain))
        medoids.append(c)
        np.minimum(nearest, D[:, c], out=nearest)
    assert len(set(medoids)) == k <= n
    return medoids


def _nearest_two(D: np.ndarray, medoids: np.ndarray):
    """Nearest medoid position (lowest on ties), its distance, and the second-nearest distance."""
    Dm = D[:, medoids]
    near = np.argmin(Dm, axis=1)
    dn = Dm[np.arange(len(D)), near]
    if len(medoids) == 1:
        return near, dn, np.full(len(D), np.inf)
    ds = np.partition(Dm, 1, axis=1)[:, 1]
    return near, dn, ds


def _swap(D: np.ndarray, medoids: np.ndarray, max_iter: int, tol: float):
    n, k = len(D), len(medoids)
    near, dn, ds = _nearest_two(D, medoids)
    cost = float(dn.sum())
    history = [cost]
    it = 0
    while it < max_iter and k < n:
        # delta(i, h) = sum_j min(D_jh - dn_j, 0) + sum_{j in C_i} [min(D_jh, ds_j) - min(D_jh, dn_j)]
        # (every point may move to h; members of i otherwise fall back to their second-nearest medoid)
        low = np.minimum(D, dn[:, None])
        A = low.sum(axis=0) - dn.sum()
        term = np.minimum(D, ds[:, None])
        term -= low
        onehot = np.zeros((k, n))
        onehot[near, np.arange(n)] = 1.0
        delta = A[None, :] + onehot @ term
        delta[:, medoids] = np.inf
        i, h = np.unravel_index(int(np.argmin(delta)), delta.shape)
        if not delta[i, h] < -tol * max(1.0, cost):
            break
        medoids[i] = h
        near, dn, ds = _nearest_two(D, medoids)
        cost = float(dn.sum())
        history.append(cost)
        it += 1
    return medoids, near, cost, it, history


def kmedoids(D: np.ndarray, k: int, max_iter: int = 100, seed: int = 0, init: str = "build", tol: float = 1e-12,
             n_init: int = 5) -> KMedoidsResult:
    """Minimise the sum of distances from each point to its nearest medoid.

    Each start runs best-improvement SWAP to a local optimum; ``n_init`` starts are
    made and the cheapest result is kept. With ``init="build"`` the first start is
    greedy BUILD and the rest are random draws from ``seed``; with ``init="random"``
    every start is random. One SWAP iteration scores all (medoid, candidate)
    exchanges with a few O(n^2) passes and one (k, n) x (n, n) product.
    """
    D = np.asarray(D, dtype=np.float64)
    n = len(D)
    if n == 0:
        raise ConfigError("cannot cluster an empty set")
    if not 1 <= k <= n:
        raise ConfigError(f"k={k} must be in [1, {n}]")
    if init not in ("build", "random"):
        raise ConfigError(f"unknown init {init!r}")
    if n_init < 1:
        raise ConfigError("n_init must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for start in range(n_init):
        if init == "build" and start == 0:
            medoids = np.array(_build(D, k))
        else:
            medoids = np.sort(rng.choice(n, size=k, replace=False))
        result = _swap(D, medoids, max_iter, tol)
        if best is None or result[2] < best[2] - tol * max(1.0, result[2]):
            best = result
        if k == n:
            break
    medoids, near, cost, it, history = best
    return KMedoidsResult(medoids=medoids.copy(), labels=near.copy(), cost=cost, n_iter=it, history=history)
