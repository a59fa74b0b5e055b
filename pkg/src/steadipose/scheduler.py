"""Per-frame adjustment of objective weights from gyro activity and landmark statistics."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import InvalidArgumentError
from .trajectory import LandmarkSet, landmark_center

SMOOTHNESS_FIELDS = ("w_r_c0", "w_r_c1", "w_t_c0", "w_t_c1")


@dataclass(frozen=True)
class SchedulerParams:
    window: int = 30
    omega_ref: float = 0.3
    m_min: float = 0.05
    pose_ref: float = 0.35
    pose_full: float = 0.9
    pose_falloff_min: float = 0.1
    pose_boost_max: float = 3.0
    center_ref: float = 0.01
    scale_ref: float = 0.02
    v_min: float = 0.1

    def __post_init__(self):
        if self.window < 2:
            raise InvalidArgumentError("scheduler window must hold at least 2 frames")
        if not (self.omega_ref > 0 and 0 < self.m_min <= 1 and 0 < self.v_min <= 1
                and self.center_ref > 0 and self.scale_ref > 0):
            raise InvalidArgumentError(f"invalid scheduler parameters {self!r}")
        if not (0 <= self.pose_ref < self.pose_full and 0 < self.pose_falloff_min <= 1
                and self.pose_boost_max >= 1):
            raise InvalidArgumentError(f"invalid pose schedule {self!r}")


@dataclass
class SchedulerState:
    params: SchedulerParams = SchedulerParams()
    omega: deque = field(default=None)
    centers: deque = field(default=None)
    scales: deque = field(default=None)

    def __post_init__(self):
        w = self.params.window
        self.omega = deque(self.omega or (), maxlen=w)
        self.centers = deque(self.centers or (), maxlen=w)
        self.scales = deque(self.scales or (), maxlen=w)


@dataclass(frozen=True)
class ScheduledWeights:
    weights: object
    motion_multiplier: float = 1.0
    pose_falloff: float = 1.0
    pose_boost: float = 1.0
    noise_multiplier: float = 1.0

    @property
    def fitting_multiplier(self):
        return self.motion_multiplier * self.pose_falloff * self.noise_multiplier


def face_scale(points):
    """Bounding size of the landmark cloud (larger of width and height)."""
    span = points.max(axis=0) - points.min(axis=0)
    return float(max(span[0], span[1]))


def pose_proxy(points):
    """Approximate yaw from the asymmetry of the landmark cloud around its center.

    Used only when the trace carries no pose hint; a frontal, left-right symmetric
    face gives 0.
    """
    cx = points[:, 0].mean()
    left = cx - points[:, 0].min()
    right = points[:, 0].max() - cx
    total = left + right
    if total <= 0.0:
        return 0.0
    return math.asin(min(1.0, abs(right - left) / total))


def _ramp(p, params, end_value):
    """1 at ``pose_ref``, ``end_value`` at ``pose_full``, linear in between, clamped outside."""
    if p <= params.pose_ref:
        return 1.0
    s = min(1.0, (p - params.pose_ref) / (params.pose_full - params.pose_ref))
    return (1.0 - s) + s * end_value


def motion_multiplier(mean_omega, params):
    return float(np.clip(mean_omega / params.omega_ref, params.m_min, 1.0))


def noise_multiplier(center_std, scale_std, params):
    v = center_std / params.center_ref + scale_std / params.scale_ref
    return float(np.clip(1.0 / (1.0 + v), params.v_min, 1.0))


def update_and_schedule(state, omega_mag, lms, base):
    """Push this frame into the window and return the adjusted weights.

    ``lms`` may be ``None`` for frames without a face; the landmark buffers are then
    left untouched and the pose and noise rules do not fire.
    """
    params = state.params
    state.omega.append(float(omega_mag))
    m1 = motion_multiplier(float(np.mean(state.omega)), params)

    falloff = boost = m3 = 1.0
    if lms is not None:
        pts = lms.points if isinstance(lms, LandmarkSet) else np.asarray(lms, dtype=float)
        state.centers.append(landmark_center(pts))
        state.scales.append(face_scale(pts))
        hint = getattr(lms, "pose_hint", None)
        p = max(abs(hint[0]), abs(hint[1])) if hint is not None else pose_proxy(pts)
        falloff = _ramp(p, params, params.pose_falloff_min)
        boost = _ramp(p, params, params.pose_boost_max)
        centers = np.array(state.centers)
        center_std = math.sqrt(float(np.sum(centers.var(axis=0))))
        scale_std = float(np.std(np.array(state.scales)))
        m3 = noise_multiplier(center_std, scale_std, params)

    changes = {"w_f": base.w_f * m1 * falloff * m3}
    changes.update({f: getattr(base, f) * boost for f in SMOOTHNESS_FIELDS})
    return ScheduledWeights(replace(base, **changes), m1, falloff, boost, m3)
