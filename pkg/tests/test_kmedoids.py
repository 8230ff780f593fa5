import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shenet.errors import ConfigError
from shenet.kmedoids import clustering_cost, kmedoids, pairwise_distances


def brute_force_optimum(D, k):
    return min(clustering_cost(D, list(c)) for c in itertools.combinations(range(len(D)), k))


def test_pairwise_distances_match_loop():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(7, 40))
    D = pairwise_distances(X)
    for i in range(7):
        for j in range(7):
            assert D[i, j] == pytest.approx(np.sqrt(((X[i] - X[j]) ** 2).sum()), abs=1e-12)
    assert np.all(np.diag(D) == 0)
    assert np.array_equal(D, D.T)


@pytest.mark.parametrize("seed", range(5))
def test_k2_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    D = pairwise_distances(rng.normal(size=(10, 40)))
    res = kmedoids(D, 2, seed=seed)
    assert res.cost == pytest.approx(brute_force_optimum(D, 2), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 8), k=st.integers(1, 3), seed=st.integers(0, 10_000))
def test_never_worse_than_optimum_and_labels_nearest(n, k, seed):
    k = min(k, n)
    rng = np.random.default_rng(seed)
    D = pairwise_distances(rng.normal(size=(n, 6)))
    res = kmedoids(D, k, seed=seed)
    opt = brute_force_optimum(D, k)
    assert res.cost >= opt - 1e-9
    assert res.cost == pytest.approx(clustering_cost(D, res.medoids), abs=1e-12)
    # every point sits with its nearest medoid
    for j, lab in enumerate(res.labels):
        assert D[j, res.medoids[lab]] == pytest.approx(D[j, res.medoids].min(), abs=1e-12)
    assert len(set(res.medoids.tolist())) == k


def test_cost_history_is_non_increasing():
    rng = np.random.default_rng(3)
    D = pairwise_distances(rng.normal(size=(60, 10)))
    res = kmedoids(D, 5, init="random", seed=3)
    assert all(b <= a + 1e-12 for a, b in zip(res.history, res.history[1:]))


def test_well_separated_blobs_recovered():
    rng = np.random.default_rng(0)
    centers = np.array([[0, 0], [50, 0], [0, 50]])
    X = np.concatenate([c + rng.normal(size=(20, 2)) for c in centers])
    res = kmedoids(pairwise_distances(X), 3)
    groups = [set(res.labels[i * 20:(i + 1) * 20].tolist()) for i in range(3)]
    assert all(len(g) == 1 for g in groups)
    assert len(set.union(*groups)) == 3


def test_deterministic_for_seed():
    rng = np.random.default_rng(5)
    D = pairwise_distances(rng.normal(size=(30, 4)))
    a = kmedoids(D, 4, init="random", seed=9)
    b = kmedoids(D, 4, init="random", seed=9)
    assert np.array_equal(a.medoids, b.medoids) and np.array_equal(a.labels, b.labels)


def test_k_equal_n_zero_cost():
    D = pairwise_distances(np.arange(12.0).reshape(6, 2))
    assert kmedoids(D, 6).cost == 0.0


@pytest.mark.parametrize("k", [0, 7])
def test_bad_k(k):
    D = pairwise_distances(np.ones((6, 2)))
    with pytest.raises(ConfigError):
        kmedoids(D, k)


def test_empty_input():
    with pytest.raises(ConfigError):
        kmedoids(np.zeros((0, 0)), 1)
