"""Smooth target head-center estimation from per-frame landmark centers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InvalidArgumentError

DEFAULT_LANDMARK_COUNT = 133
CONSTRAINT_MARGIN = 1e-6


@dataclass(frozen=True)
class LandmarkSet:
    """2D landmarks in normalized image coordinates, plus an optional (yaw, pitch, roll) hint."""

    points: np.ndarray
    pose_hint: Optional[tuple] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise InvalidArgumentError("landmark set is empty")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("landmarks must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.pose_hint is not None:
            object.__setattr__(self, "pose_hint", tuple(float(v) for v in self.pose_hint))

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class TrajectoryParams:
    w1: float = 5000.0
    w2: float = 1.0
    d_ref: float = 0.03
    crop_ratio_r: float = 0.15

    def __post_init__(self):
        if not (self.w1 >= 0 and self.w2 >= 0 and self.d_ref > 0 and self.crop_ratio_r > 0):
            raise InvalidArgumentError(f"invalid trajectory parameters {self!r}")
        if not self.crop_ratio_r < 0.5:
            raise InvalidArgumentError("crop ratio must be below 0.5")


def landmark_center(lms):
    pts = lms.points if isinstance(lms, LandmarkSet) else np.asarray(lms, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise InvalidArgumentError("cannot take the center of an empty landmark set")
    return pts.sum(axis=0) / len(pts)


def head_energy(h, prev_h, center, params):
    """Objective value of a candidate target center ``h`` (vectorized over leading axes)."""
    h = np.asarray(h, dtype=float)
    inertia = np.sum((h - prev_h) ** 2, axis=-1)
    dev = np.max(np.abs(h - center), axis=-1)
    return params.w1 * inertia + params.w2 * (dev / params.d_ref) ** 2


def smooth_head_center(prev_h, center, params=TrajectoryParams()):
    """Minimize ``w1 |H - H_prev|^2 + w2 (|H - C|_inf / d_ref)^2`` subject to ``|H - C|_inf < r``.

    With ``u = H - C`` and ``p = H_prev - C`` the minimizer for a fixed radius
    ``m = |u|_inf`` is ``clip(p, -m, m)``, which leaves a convex piecewise-quadratic
    problem in ``m`` alone. That problem is solved in closed form, then ``m`` is
    capped at ``r - 1e-6`` so the box constraint holds strictly.
    """
    prev_h = np.asarray(prev_h, dtype=float)
    center = np.asarray(center, dtype=float)
    p = prev_h - center
    a = np.sort(np.abs(p))[::-1]
    k = params.w2 / params.d_ref ** 2
    w1 = params.w1
    if w1 + k == 0.0:
        m = a[0]
    else:
        m = w1 * (a[0] + a[1]) / (2.0 * w1 + k)
        if m > a[1]:
            m = w1 * a[0] / (w1 + k)
    m = min(m, params.crop_ratio_r - CONSTRAINT_MARGIN)
    return center + np.clip(p, -m, m)
