"""Trajectory records, ETH/UCY-style text ingestion and a synthetic scene generator."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParseError, ShapeError

TRAIN = "train"
TEST = "test"

# raster class ids used by the synthetic generator
CLS_BACKGROUND = 0
CLS_WALKABLE = 1
CLS_CURB = 2


@dataclass(frozen=True)
class TrajPoint:
    t: int
    x: float
    y: float

    def __post_init__(self):
        if self.t < 0:
            raise DataError(f"negative frame index {self.t}")
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise DataError(f"non-finite position at frame {self.t}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One pedestrian window: ``t_pas`` observed points followed by ``t_fut`` future points."""

    person_id: int
    frames: np.ndarray
    xy: np.ndarray
    t_pas: int
    t_fut: int

    def __post_init__(self):
        frames = _readonly(np.asarray(self.frames, dtype=np.int64).copy())
        xy = _readonly(np.asarray(self.xy, dtype=np.float64).copy())
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "xy", xy)
        if self.t_pas < 2 or self.t_fut < 1:
            raise ShapeError(f"need t_pas >= 2 and t_fut >= 1, got {self.t_pas}, {self.t_fut}")
        n = self.t_pas + self.t_fut
        if xy.shape != (n, 2) or frames.shape != (n,):
            raise ShapeError(f"expected {n} points, got xy {xy.shape}, frames {frames.shape}")
        if np.any(frames < 0) or np.any(np.diff(frames) <= 0):
            raise DataError(f"frames of person {self.person_id} must be non-negative and strictly increasing")
        if not np.all(np.isfinite(xy)):
            raise DataError(f"non-finite coordinates for person {self.person_id}")

    @property
    def past(self) -> np.ndarray:
        return self.xy[: self.t_pas]

    @property
    def future(self) -> np.ndarray:
        return self.xy[self.t_pas :]

    @property
    def points(self) -> list[TrajPoint]:
        return [TrajPoint(int(t), float(x), float(y)) for t, (x, y) in zip(self.frames, self.xy)]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.person_id == other.person_id
            and self.t_pas == other.t_pas
            and self.t_fut == other.t_fut
            and np.array_equal(self.frames, other.frames)
            and np.array_equal(self.xy, other.xy)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SceneRaster:
    """Per-class occupancy grid of shape ``(n_cls, h, w)`` with values in [0, 1]."""

    grid: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.float64)
        if g.ndim != 3 or min(g.shape) < 1:
            raise ShapeError(f"raster grid must be (n_cls, h, w) with positive sizes, got {g.shape}")
        if not np.all(np.isfinite(g)) or g.min() < 0.0 or g.max() > 1.0:
            raise DataError("raster cells must lie in [0, 1]")
        object.__setattr__(self, "grid", _readonly(g.copy()))

    @property
    def n_cls(self) -> int:
        return self.grid.shape[0]

    @property
    def h(self) -> int:
        return self.grid.shape[1]

    @property
    def w(self) -> int:
        return self.grid.shape[2]

    @classmethod
    def empty(cls, n_cls: int = 8, h: int = 16, w: int = 16) -> "SceneRaster":
        return cls(np.zeros((n_cls, h, w)))

    def to_json(self) -> dict:
        return {"n_cls": self.n_cls, "h": self.h, "w": self.w, "grid": self.grid.ravel().tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "SceneRaster":
        try:
            n_cls, h, w = int(obj["n_cls"]), int(obj["h"]), int(obj["w"])
            flat = np.asarray(obj["grid"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed raster object: {exc}") from exc
        if flat.size != n_cls * h * w:
            raise DataError(f"raster has {flat.size} cells, expected {n_cls}*{h}*{w}")
        return cls(flat.reshape(n_cls, h, w))

    def __eq__(self, other):
        if not isinstance(other, SceneRaster):
            return NotImplemented
        return np.array_equal(self.grid, other.grid)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    trajectories: tuple
    scene: SceneRaster
    split: tuple = field(default=())
    units: str = "m"

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        split = tuple(self.split) if self.split else (TRAIN,) * len(trajs)
        if len(split) != len(trajs):
            raise DataError("split labels must cover every trajectory")
        bad = set(split) - {TRAIN, TEST}
        if bad:
            raise DataError(f"unknown split labels {sorted(bad)}")
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "split", split)

    def __len__(self):
        return len(self.trajectories)

    def subset(self, label: str) -> list[Trajectory]:
        return [t for t, s in zip(self.trajectories, self.split) if s == label]

    @property
    def train(self) -> list[Trajectory]:
        return self.subset(TRAIN)

    @property
    def test(self) -> list[Trajectory]:
        return self.subset(TEST)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.trajectories == other.trajectories
            and self.split == other.split
            and self.scene == other.scene
            and self.units == other.units
        )

    __hash__ = None


def window_count(length: int, t_pas: int, t_fut: int, stride: int) -> int:
    return max(0, (length - t_pas - t_fut) // stride + 1)


def _parse_tracks(path: Path):
    tracks: dict[int, list] = {}
    warned = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            cols = s.split()
            if len(cols) < 4:
                raise ParseError(path, lineno, f"expected 4 columns 'frame_id ped_id x y', got {len(cols)}")
            if len(cols) > 4 and not warned:
                warnings.warn(f"{path}: ignoring columns beyond the fourth (first seen on line {lineno})")
                warned = True
            try:
                frame = float(cols[0])
                pid = float(cols[1])
                x = float(cols[2])
                y = float(cols[3])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if frame != int(frame) or pid != int(pid) or frame < 0:
                raise ParseError(path, lineno, "frame and pedestrian ids must be non-negative integers")
            if not (np.isfinite(x) and np.isfinite(y)):
                raise ParseError(path, lineno, "non-finite coordinate")
            track = tracks.setdefault(int(pid), [])
            if track and int(frame) <= track[-1][0]:
                raise DataError(f"{path}:{lineno}: frames for pedestrian {int(pid)} are not strictly increasing")
            track.append((int(frame), x, y))
    return tracks


def read_tracks(path) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Whole tracks of a ``frame_id ped_id x y`` file as {ped_id: (frames, xy)}."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    out = {}
    for pid, track in _parse_tracks(path).items():
        arr = np.asarray(track, dtype=np.float64)
        out[pid] = (arr[:, 0].astype(np.int64), arr[:, 1:])
    return out


def load_trajectory_file(path, t_pas: int = 8, t_fut: int = 12, stride: int = 1, units: str = "m") -> Dataset:
    """Cut every pedestrian track of a ``frame_id ped_id x y`` file into sliding windows.

    Tracks are split wherever the frame step exceeds the smallest step seen in the
    file; nothing is interpolated.
    """
    if t_pas < 1 or t_fut < 1 or stride < 1:
        raise DataError("t_pas, t_fut and stride must be >= 1")
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    tracks = _parse_tracks(path)

    steps = [np.diff([p[0] for p in tr]) for tr in tracks.values() if len(tr) > 1]
    steps = np.concatenate(steps) if steps else np.array([1])
    unit = int(steps.min()) if steps.size else 1

    n = t_pas + t_fut
    out = []
    for pid, track in tracks.items():
        arr = np.asarray(track, dtype=np.float64)
        frames = arr[:, 0].astype(np.int64)
        cuts = np.flatnonzero(np.diff(frames) > unit) + 1
        for seg_f, seg_xy in zip(np.split(frames, cuts), np.split(arr[:, 1:], cuts)):
            for start in range(0, window_count(len(seg_f), t_pas, t_fut, stride) * stride, stride):
                out.append(Trajectory(pid, seg_f[start : start + n], seg_xy[start : start + n], t_pas, t_fut))
    return Dataset(tuple(out), SceneRaster.empty(), units=units)


def dump_trajectory_file(dataset: Dataset | Sequence[Trajectory], path) -> None:
    """Write trajectories in the 4-column text format.

    Each trajectory gets its own pedestrian id when ids repeat, so that loading
    with ``stride = t_pas + t_fut`` reproduces the windows exactly.
    """
    trajs = dataset.trajectories if isinstance(dataset, Dataset) else tuple(dataset)
    ids = [t.person_id for t in trajs]
    unique = len(set(ids)) == len(ids)
    with open(path, "w", encoding="utf-8") as fh:
        for i, tr in enumerate(trajs):
            pid = tr.person_id if unique else i
            for f, (x, y) in zip(tr.frames, tr.xy):
                fh.write(f"{int(f)}\t{pid}\t{float(x)!r}\t{float(y)!r}\n")


def save_raster(raster: SceneRaster, path) -> None:
    Path(path).write_text(json.dumps(raster.to_json()))


def load_raster(path) -> SceneRaster:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read raster {path}: {exc}") from exc
    return SceneRaster.from_json(obj)


# --------------------------------------------------------------------------
# synthetic scenes

EXTENT = 8.0  # synthetic scenes live in [-EXTENT, EXTENT]^2
_PAST_END = 4.5  # arclength where the observed part ends, just before the manoeuvre
_WINDOW_TRAVEL = 9.0


def _arc(cx, cy, r, a0, a1, n=64):
    a = np.linspace(a0, a1, n)
    return np.stack([cx + r * np.cos(a), cy + r * np.sin(a)], axis=1)


def _template_path(kind: str) -> np.ndarray:
    """Dense polyline in a local frame; every template enters from -x heading +x."""
    if kind == "straight":
        return np.array([[-7.0, 0.0], [9.0, 0.0]])
    if kind == "turn":
        return np.concatenate([[[-7.0, 0.0]], _arc(-2.0, 2.0, 2.0, -np.pi / 2, 0.0), [[0.0, 12.0]]])
    if kind == "turnback":
        return np.concatenate([[[-7.0, 0.0]], _arc(-2.0, 0.6, 0.6, -np.pi / 2, np.pi / 2), [[-12.0, 1.2]]])
    raise ValueError(kind)


TEMPLATE_KINDS = ("straight", "turnback", "turn")


def _resample(poly: np.ndarray, s: np.ndarray, lateral: float = 0.0) -> np.ndarray:
    seg = np.diff(poly, axis=0)
    seglen = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    pts = np.stack([np.interp(s, cum, poly[:, 0]), np.interp(s, cum, poly[:, 1])], axis=1)
    if lateral:
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
        tang = seg[idx] / seglen[idx, None]
        pts = pts + lateral * np.stack([-tang[:, 1], tang[:, 0]], axis=1)
    return pts


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _group_geometry(g: int, n_groups: int):
    kind = TEMPLATE_KINDS[g % len(TEMPLATE_KINDS)]
    angle = 2.0 * np.pi * g / n_groups + np.pi / 7
    return kind, _template_path(kind), _rotation(angle)


def _rasterize(paths: Iterable[np.ndarray], curbs: Iterable[np.ndarray], n_cls: int, h: int, w: int) -> SceneRaster:
    grid = np.zeros((n_cls, h, w))
    grid[CLS_BACKGROUND] = 1.0

    def cells(p):
        col = np.clip(((p[:, 0] + EXTENT) / (2 * EXTENT) * w).astype(int), 0, w - 1)
        row = np.clip(((EXTENT - p[:, 1]) / (2 * EXTENT) * h).astype(int), 0, h - 1)
        return row, col

    for p in paths:
        r, c = cells(p)
        grid[CLS_WALKABLE, r, c] = 1.0
        grid[CLS_BACKGROUND, r, c] = 0.0
    if n_cls > CLS_CURB:
        for p in curbs:
            r, c = cells(p)
            grid[CLS_CURB, r, c] = 1.0
    return SceneRaster(grid)


def generate_synthetic_scene(
    n_groups: int = 3,
    per_group: int = 100,
    noise_sigma: float = 0.05,
    seed: int = 0,
    t_pas: int = 8,
    t_fut: int = 12,
    *,
    lateral_spread: float = 0.0,
    speed_spread: float = 0.0,
    phase_spread: float = 0.0,
    n_cls: int = 8,
    h: int = 16,
    w: int = 16,
) -> Dataset:
    """Scene with ``n_groups`` lane templates (straight, turn-back, turn, repeated under rotation).

    Each group is instantiated ``per_group`` times. ``noise_sigma`` is the std of
    i.i.d. Gaussian jitter per point; the ``*_spread`` knobs add per-person
    lateral lane offset, speed factor and phase, all zero by default so that a
    noise-free call reproduces the templates exactly.
    """
    if n_groups < 1 or per_group < 1 or noise_sigma < 0:
        raise DataError("need n_groups >= 1, per_group >= 1, noise_sigma >= 0")
    if t_pas < 2 or t_fut < 1:
        raise DataError("need t_pas >= 2 and t_fut >= 1")
    rng = np.random.default_rng(seed)
    n = t_pas + t_fut
    step = _WINDOW_TRAVEL / (n - 1)
    rel = np.arange(n) - (t_pas - 1)

    trajs = []
    dense, curbs = [], []
    for g in range(n_groups):
        kind, poly, rot = _group_geometry(g, n_groups)
        dense.append(_resample(poly, np.linspace(0, _PAST_END + _WINDOW_TRAVEL + 1.0, 200)) @ rot.T)
        if kind == "turnback":
            curbs.append(np.array([[-1.2, 0.6], [-1.0, 0.3], [-1.0, 0.9]]) @ rot.T)
        for _ in range(per_group):
            lateral = lateral_spread * rng.standard_normal() if lateral_spread else 0.0
            speed = max(0.3, 1.0 + speed_spread * rng.standard_normal()) if speed_spread else 1.0
            phase = phase_spread * rng.standard_normal() if phase_spread else 0.0
            s = _PAST_END + phase + rel * step * speed
            pts = _resample(poly, s, lateral) @ rot.T
            if noise_sigma:
                pts = pts + noise_sigma * rng.standard_normal(pts.shape)
            trajs.append(Trajectory(len(trajs), np.arange(n), pts, t_pas, t_fut))
    return Dataset(tuple(trajs), _rasterize(dense, curbs, n_cls, h, w))


def group_labels(n_groups: int, per_group: int) -> np.ndarray:
    """Template index of every trajectory emitted by :func:`generate_synthetic_scene`."""
    return np.repeat(np.arange(n_groups), per_group)


def split_dataset(dataset: Dataset, n_test: int, seed: int = 0) -> Dataset:
    """Relabel a random ``n_test`` subset as test; order of trajectories is kept."""
    if not 0 <= n_test <= len(dataset):
        raise DataError(f"n_test={n_test} out of range for {len(dataset)} trajectories")
    rng = np.random.default_rng(seed)
    test_idx = set(rng.permutation(len(dataset))[:n_test].tolist())
    split = tuple(TEST if i in test_idx else TRAIN for i in range(len(dataset)))
    return Dataset(dataset.trajectories, dataset.scene, split, dataset.units)
