"""Group trajectory bank: K-medoids initialisation, cosine search and thresholded online update."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, FormatError, FrozenBankError, ShapeError, UndefinedSimilarityError
from .kmedoids import kmedoids, pairwise_distances
from .trajdata import Trajectory

BANK_FORMAT_VERSION = 1


class Origin(str, enum.Enum):
    INITIAL = "initial_cluster"
    ONLINE = "online_addition"
    MERGED = "merged_cluster"


class UpdateOutcome(str, enum.Enum):
    UNCHANGED = "unchanged"
    ADDED = "added"
    ADDED_AND_MERGED = "added_and_merged"


@dataclass(frozen=True)
class BankEntry:
    past: np.ndarray
    future: np.ndarray
    origin: Origin


@dataclass(frozen=True)
class SearchResult:
    index: int
    score: float
    candidate_future: np.ndarray


def default_k_recluster(beta) -> int:
    if beta is None or not math.isfinite(beta):
        return 1
    return max(1, int(round(beta / 4)))


class TrajectoryBank:
    """Ordered past/future pairs plus the update-policy state.

    Entries live in growable buffers so that appending is amortised O(1) and a
    search is one pass over the stored pasts. Pending (not yet merged) online
    additions are always the tail of the entry list.
    """

    def __init__(self, t_pas: int, t_fut: int, theta: float = math.inf, beta: float = math.inf,
                 k_recluster: int | None = None, translate: bool = False, capacity: int = 64):
        if t_pas < 1 or t_fut < 1:
            raise ConfigError("t_pas and t_fut must be positive")
        self.t_pas = t_pas
        self.t_fut = t_fut
        self.theta = float(theta)
        self.beta = beta
        self.k_recluster = k_recluster if k_recluster is not None else default_k_recluster(beta)
        self.translate = translate
        self.n_added = 0
        self.frozen = False
        self.n_merges = 0
        self.merged_in = 0
        self.clusters_out = 0
        self._n = 0
        self._past = np.empty((capacity, t_pas * 2))
        self._future = np.empty((capacity, t_fut, 2))
        self._keys = np.empty((capacity, t_pas * 2))  # unit-normalised search keys
        self._valid = np.empty(capacity, dtype=bool)
        self._origin: list[Origin] = []

    # ----- storage -------------------------------------------------------
    def __len__(self):
        return self._n

    def _grow(self, need: int):
        cap = len(self._past)
        if need <= cap:
            return
        new = max(need, 2 * cap)
        for name in ("_past", "_future", "_keys", "_valid"):
            old = getattr(self, name)
            buf = np.empty((new,) + old.shape[1:], dtype=old.dtype)
            buf[: self._n] = old[: self._n]
            setattr(self, name, buf)

    def _key(self, past_flat: np.ndarray):
        v = past_flat.reshape(self.t_pas, 2)
        if self.translate:
            v = v - v[-1]
        v = v.ravel()
        norm = np.sqrt(v @ v)
        if norm == 0.0 or not np.isfinite(norm):
            return np.zeros_like(v), False
        return v / norm, True

    def _append(self, past, future, origin: Origin):
        past = np.asarray(past, dtype=np.float64)
        future = np.asarray(future, dtype=np.float64)
        if past.shape != (self.t_pas, 2) or future.shape != (self.t_fut, 2):
            raise ShapeError(f"entry shapes {past.shape}/{future.shape} do not match ({self.t_pas}, 2)/({self.t_fut}, 2)")
        if not (np.all(np.isfinite(past)) and np.all(np.isfinite(future))):
            raise ShapeError("bank entries must be finite")
        self._grow(self._n + 1)
        i = self._n
        self._past[i] = past.ravel()
        self._future[i] = future
        self._keys[i], self._valid[i] = self._key(self._past[i])
        self._origin.append(Origin(origin))
        self._n += 1

    def add(self, past, future, origin: Origin = Origin.INITIAL) -> int:
        """Append one pair outside the update policy; returns its index."""
        if self.frozen:
            raise FrozenBankError("bank is frozen; no further updates")
        self._append(past, future, origin)
        return self._n - 1

    def _truncate(self, n: int):
        self._n = n
        del self._origin[n:]

    @property
    def entries(self) -> list[BankEntry]:
        return [self.entry(i) for i in range(self._n)]

    def entry(self, i: int) -> BankEntry:
        if not 0 <= i < self._n:
            raise IndexError(i)
        return BankEntry(self._past[i].reshape(self.t_pas, 2).copy(), self._future[i].copy(), self._origin[i])

    @property
    def pasts(self) -> np.ndarray:
        return self._past[: self._n].reshape(self._n, self.t_pas, 2)

    @property
    def futures(self) -> np.ndarray:
        return self._future[: self._n]

    @property
    def pending(self) -> list[BankEntry]:
        return [self.entry(i) for i in range(self._n - self.n_added, self._n)]

    # ----- search --------------------------------------------------------
    def scores(self, past) -> np.ndarray:
        """Cosine similarity of ``past`` to every stored past; excluded entries get -inf."""
        past = np.asarray(past, dtype=np.float64)
        if past.shape != (self.t_pas, 2):
            raise ShapeError(f"query shape {past.shape} != ({self.t_pas}, 2)")
        if self._n == 0:
            raise UndefinedSimilarityError("bank is empty")
        q, ok = self._key(past.ravel())
        if not ok:
            raise UndefinedSimilarityError("query has zero norm")
        s = self._keys[: self._n] @ q
        valid = self._valid[: self._n]
        if not valid.any():
            raise UndefinedSimilarityError("every bank entry has zero norm")
        return np.where(valid, np.clip(s, -1.0, 1.0), -np.inf)

    def search(self, past) -> SearchResult:
        s = self.scores(past)
        i = int(np.argmax(s))  # first maximum, i.e. lowest index on ties
        return SearchResult(i, float(s[i]), self._future[i].copy())

    def topk_search(self, past, k: int) -> list[SearchResult]:
        if k < 1:
            raise ConfigError("k must be >= 1")
        s = self.scores(past)
        order = np.argsort(-s, kind="stable")
        n_valid = int(np.isfinite(s).sum())
        return [SearchResult(int(i), float(s[i]), self._future[i].copy()) for i in order[: min(k, n_valid)]]

    # ----- update --------------------------------------------------------
    def maybe_update(self, traj: Trajectory, predicted_future, k_recluster: int | None = None,
                     seed: int = 0) -> UpdateOutcome:
        """Add ``traj`` when the prediction's ADE exceeds ``theta``; merge pending additions every ``beta``."""
        if self.frozen:
            raise FrozenBankError("bank is frozen; no further updates")
        pred = np.asarray(predicted_future, dtype=np.float64)
        gt = np.asarray(traj.future, dtype=np.float64)
        if pred.shape != (self.t_fut, 2) or gt.shape != (self.t_fut, 2) or traj.past.shape != (self.t_pas, 2):
            raise ShapeError("trajectory/prediction shapes do not match the bank")
        d = float(np.mean(np.linalg.norm(pred - gt, axis=1)))
        if d <= self.theta:
            return UpdateOutcome.UNCHANGED
        self._append(traj.past, traj.future, Origin.ONLINE)
        self.n_added += 1
        if self.n_added >= self.beta:
            self._merge_pending(k_recluster if k_recluster is not None else self.k_recluster, seed)
            return UpdateOutcome.ADDED_AND_MERGED
        return UpdateOutcome.ADDED

    def _merge_pending(self, k: int, seed: int):
        start = self._n - self.n_added
        Z = np.concatenate([self._past[start : self._n], self._future[start : self._n].reshape(self.n_added, -1)], axis=1)
        centroids = cluster_means(Z, min(k, len(Z)), seed=seed)
        self.merged_in += len(Z)
        self.clusters_out += len(centroids)
        self.n_merges += 1
        self._truncate(start)
        for z in centroids:
            self._append(z[: self.t_pas * 2].reshape(self.t_pas, 2), z[self.t_pas * 2 :].reshape(self.t_fut, 2), Origin.MERGED)
        self.n_added = 0

    def freeze(self) -> "TrajectoryBank":
        self.frozen = True
        return self

    def __eq__(self, other):
        if not isinstance(other, TrajectoryBank):
            return NotImplemented
        return (
            self.t_pas == other.t_pas and self.t_fut == other.t_fut
            and self.theta == other.theta and self.beta == other.beta
            and self.k_recluster == other.k_recluster and self.translate == other.translate
            and self.n_added == other.n_added and self.frozen == other.frozen
            and self._origin == other._origin
            and np.array_equal(self.pasts, other.pasts)
            and np.array_equal(self.futures, other.futures)
        )

    __hash__ = None


def cluster_means(Z: np.ndarray, k: int, max_iter: int = 100, seed: int = 0, init: str = "build"):
    """K-medoids on rows of ``Z``; returns the element-wise mean of each non-empty cluster."""
    res = kmedoids(pairwise_distances(Z), k, max_iter=max_iter, seed=seed, init=init)
    return [Z[res.labels == c].mean(axis=0) for c in range(k) if np.any(res.labels == c)]


def cluster_trajectories(trainset: Sequence[Trajectory], k: int = 32, max_iter: int = 100, seed: int = 0,
                         init: str = "build"):
    """K-medoids over flattened complete trajectories. Returns (Z, KMedoidsResult)."""
    if len(trainset) == 0:
        raise ConfigError("cannot initialise a bank from an empty training set")
    if not 1 <= k <= len(trainset):
        raise ConfigError(f"k={k} must be in [1, {len(trainset)}]")
    t_pas, t_fut = trainset[0].t_pas, trainset[0].t_fut
    if any(t.t_pas != t_pas or t.t_fut != t_fut for t in trainset):
        raise ConfigError("all trajectories must share t_pas/t_fut")
    Z = np.stack([t.xy.ravel() for t in trainset])
    return Z, kmedoids(pairwise_distances(Z), k, max_iter=max_iter, seed=seed, init=init)


def init_bank(trainset: Sequence[Trajectory], k: int = 32, max_iter: int = 100, seed: int = 0, *,
              theta: float = math.inf, beta: float = math.inf, k_recluster: int | None = None,
              translate: bool = False, init: str = "build", clustering=None) -> TrajectoryBank:
    """Cluster complete trajectories and store one averaged past/future pair per cluster.

    ``clustering`` may carry a precomputed ``cluster_trajectories`` result.
    """
    Z, res = clustering if clustering is not None else cluster_trajectories(trainset, k, max_iter, seed, init)
    t_pas, t_fut = trainset[0].t_pas, trainset[0].t_fut
    bank = TrajectoryBank(t_pas, t_fut, theta=theta, beta=beta, k_recluster=k_recluster, translate=translate,
                          capacity=max(64, 2 * k))
    for c in range(len(res.medoids)):
        members = res.labels == c
        if members.any():
            z = Z[members].mean(axis=0)
            bank._append(z[: t_pas * 2].reshape(t_pas, 2), z[t_pas * 2 :].reshape(t_fut, 2), Origin.INITIAL)
    return bank


def search(bank: TrajectoryBank, past) -> SearchResult:
    return bank.search(past)


def topk_search(bank: TrajectoryBank, past, k: int) -> list[SearchResult]:
    return bank.topk_search(past, k)


def freeze(bank: TrajectoryBank) -> TrajectoryBank:
    return bank.freeze()


# ----- persistence ---------------------------------------------------------

def _num(x):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _unnum(x):
    return float(x) if isinstance(x, str) else x


def bank_to_json(bank: TrajectoryBank) -> dict:
    return {
        "version": BANK_FORMAT_VERSION,
        "t_pas": bank.t_pas,
        "t_fut": bank.t_fut,
        "theta": _num(bank.theta),
        "beta": _num(float(bank.beta)) if not isinstance(bank.beta, int) else bank.beta,
        "k_recluster": bank.k_recluster,
        "translate": bank.translate,
        "n_added": bank.n_added,
        "frozen": bank.frozen,
        "entries": [
            {"past": bank._past[i].tolist(), "future": bank._future[i].ravel().tolist(), "origin": bank._origin[i].value}
            for i in range(len(bank))
        ],
    }


def bank_from_json(obj: dict) -> TrajectoryBank:
    if not isinstance(obj, dict) or obj.get("version") != BANK_FORMAT_VERSION:
        raise FormatError(f"unsupported bank version {obj.get('version') if isinstance(obj, dict) else None!r}")
    try:
        t_pas, t_fut = int(obj["t_pas"]), int(obj["t_fut"])
        beta = _unnum(obj["beta"])
        bank = TrajectoryBank(t_pas, t_fut, theta=_unnum(obj["theta"]), beta=beta,
                              k_recluster=int(obj["k_recluster"]), translate=bool(obj["translate"]),
                              capacity=max(64, len(obj["entries"])))
        for e in obj["entries"]:
            bank._append(np.asarray(e["past"], dtype=np.float64).reshape(t_pas, 2),
                         np.asarray(e["future"], dtype=np.float64).reshape(t_fut, 2), Origin(e["origin"]))
        bank.n_added = int(obj["n_added"])
        bank.frozen = bool(obj["frozen"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"corrupt bank file: {exc}") from exc
    if not 0 <= bank.n_added <= len(bank):
        raise FormatError("pending counter exceeds the number of entries")
    return bank


def save_bank(bank: TrajectoryBank, path) -> None:
    Path(path).write_text(json.dumps(bank_to_json(bank)))


def load_bank(path) -> TrajectoryBank:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a bank file ({exc})") from exc
    return bank_from_json(obj)
