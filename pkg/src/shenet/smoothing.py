"""Quadratic Bezier smoothing of trajectories, resampled at equidistant curve parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError


@dataclass(frozen=True)
class ControlRule:
    """How the control point is chosen.

    ``mid``      raw position at the middle time (mean of the two central
                 samples when the count is even)
    ``literal``  ``(1 - t0) * start + t0 * end``, which lies on the chord
    ``lsq``      least-squares fit of the control to all samples
    """

    kind: str = "mid"
    t0: float = 0.5

    def __post_init__(self):
        if self.kind not in ("mid", "literal", "lsq"):
            raise ConfigError(f"unknown control rule {self.kind!r}")
        if self.kind == "literal" and not 0.0 <= self.t0 <= 1.0:
            raise ConfigError(f"literal control needs t0 in [0, 1], got {self.t0}")

    @classmethod
    def parse(cls, spec) -> "ControlRule":
        """Accept a ControlRule, ``"mid"``, ``"lsq"``, ``"literal"`` or ``"literal:<t0>"``."""
        if isinstance(spec, ControlRule):
            return spec
        if spec is None:
            return cls()
        s = str(spec).strip().lower()
        if s.startswith("literal"):
            _, _, t0 = s.partition(":")
            try:
                return cls("literal", float(t0) if t0 else 0.5)
            except ValueError:
                raise ConfigError(f"bad literal control rule {spec!r}") from None
        return cls(s)

    def __str__(self):
        return f"literal:{self.t0:g}" if self.kind == "literal" else self.kind


MID = ControlRule("mid")
LSQ = ControlRule("lsq")


@dataclass(frozen=True)
class BezierSpec:
    start: np.ndarray
    control: np.ndarray
    end: np.ndarray
    control_rule: ControlRule = MID

    def __post_init__(self):
        for name in ("start", "control", "end"):
            p = np.asarray(getattr(self, name), dtype=np.float64)
            if p.shape != (2,) or not np.all(np.isfinite(p)):
                raise ShapeError(f"{name} must be a finite 2-D point")
            object.__setattr__(self, name, p)

    def __call__(self, t):
        return bezier_eval(self, t)


def _basis(t):
    t = np.asarray(t, dtype=np.float64)
    return (1 - t) ** 2, 2 * (1 - t) * t, t**2


def bezier_eval(spec: BezierSpec, t):
    """Point(s) on the curve; ``t`` may be a scalar or an array in [0, 1]."""
    ta = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(ta)) or np.any(ta < 0.0) or np.any(ta > 1.0):
        raise DataError(f"curve parameter must lie in [0, 1], got {t}")
    b0, b1, b2 = _basis(ta)
    return b0[..., None] * spec.start + b1[..., None] * spec.control + b2[..., None] * spec.end


def _params(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def control_point(points: np.ndarray, rule: ControlRule) -> np.ndarray:
    n = len(points)
    start, end = points[0], points[-1]
    if rule.kind == "literal":
        return (1 - rule.t0) * start + rule.t0 * end
    if rule.kind == "mid":
        if n % 2:
            return points[(n - 1) // 2].copy()
        return 0.5 * (points[n // 2 - 1] + points[n // 2])
    # least squares: minimise sum_j |b1_j c - r_j|^2 with r_j = p_j - b0_j s - b2_j e
    b0, b1, b2 = _basis(_params(n))
    r = points - b0[:, None] * start - b2[:, None] * end
    denom = b1 @ b1
    if denom == 0.0:
        return 0.5 * (start + end)
    return (b1 @ r) / denom


def smooth_trajectory(points, control_rule="mid") -> np.ndarray:
    """Replace ``points`` by samples of a quadratic Bezier through its endpoints."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ShapeError(f"need an (n >= 2, 2) array, got {pts.shape}")
    rule = ControlRule.parse(control_rule)
    b0, b1, b2 = _basis(_params(len(pts)))
    c = control_point(pts, rule)
    out = b0[:, None] * pts[0] + b1[:, None] * c + b2[:, None] * pts[-1]
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def bezier_spec_for(points, control_rule="mid") -> BezierSpec:
    pts = np.asarray(points, dtype=np.float64)
    rule = ControlRule.parse(control_rule)
    return BezierSpec(pts[0], control_point(pts, rule), pts[-1], rule)


def smooth_future(traj, control_rule="mid", whole: bool = False) -> np.ndarray:
    """Smoothed future segment of ``traj``.

    With ``whole=True`` the curve is fitted to the full past+future sequence and
    only its future samples are returned.
    """
    if whole:
        return smooth_trajectory(traj.xy, control_rule)[traj.t_pas :]
    return smooth_trajectory(traj.future, control_rule)
