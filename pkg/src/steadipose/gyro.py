"""Integration of gyroscope angular velocity into per-frame camera rotations."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import InvalidTraceError, OutOfRangeError
from .geometry import quat_canonical, quat_slerp, quat_to_matrix


class GyroSample(NamedTuple):
    t: float
    omega: tuple  # (wx, wy, wz) in rad/s


@dataclass(frozen=True)
class RotationTimeline:
    times: np.ndarray        # (n,)
    rotations: np.ndarray    # (n, 4)

    def __len__(self):
        return len(self.times)


def _check_monotonic(times):
    bad = np.flatnonzero(~(np.diff(times) > 0))
    if len(bad):
        i = int(bad[0]) + 1
        raise InvalidTraceError(
            f"timestamps must be strictly increasing (sample {i}: {times[i]!r} after {times[i - 1]!r})")


def integrate(samples: Sequence[GyroSample], alignment=None) -> RotationTimeline:
    """Integrate angular velocity with the midpoint rule and an exact exponential per step.

    The rotation starts at identity on the first sample and each step right-composes
    ``exp(omega_mid * dt)``. ``alignment`` optionally rotates gyro axes into camera
    axes (a fixed extrinsic quaternion).
    """
    if len(samples) == 0:
        raise InvalidTraceError("gyro trace is empty")
    times = np.array([s[0] for s in samples], dtype=float)
    omega = np.array([s[1] for s in samples], dtype=float).reshape(len(samples), 3)
    _check_monotonic(times)
    if not np.all(np.isfinite(omega)):
        raise InvalidTraceError("angular velocity must be finite")
    if alignment is not None:
        omega = omega @ quat_to_matrix(quat_canonical(alignment)).T

    increments = _exp_batch(0.5 * (omega[1:] + omega[:-1]) * np.diff(times)[:, None])
    rotations = np.empty((len(times), 4))
    w, x, y, z = 1.0, 0.0, 0.0, 0.0
    rotations[0] = (w, x, y, z)
    for i, (bw, bx, by, bz) in enumerate(increments.tolist(), start=1):
        w, x, y, z = (w * bw - x * bx - y * by - z * bz,
                      w * bx + x * bw + y * bz - z * by,
                      w * by - x * bz + y * bw + z * bx,
                      w * bz + x * by - y * bx + z * bw)
        # renormalize every step so drift cannot accumulate over long traces
        n = math.sqrt(w * w + x * x + y * y + z * z)
        w, x, y, z = w / n, x / n, y / n, z / n
        rotations[i] = (w, x, y, z)
    flip = rotations[:, 0] < 0.0
    rotations[flip] *= -1.0
    for i in np.flatnonzero(rotations[:, 0] == 0.0):
        rotations[i] = quat_canonical(rotations[i])
    return RotationTimeline(times, rotations)


def _exp_batch(rotvecs):
    theta = np.linalg.norm(rotvecs, axis=1)
    half = 0.5 * theta
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    s = np.where(small, 0.5 - theta * theta / 48.0, np.sin(half) / safe)
    w = np.where(small, 1.0 - half * half / 2.0, np.cos(half))
    q = np.column_stack([w, rotvecs * s[:, None]])
    return q / np.linalg.norm(q, axis=1)[:, None]


def rotation_at(timeline: RotationTimeline, t: float):
    """Slerp the timeline at time ``t``."""
    times = timeline.times
    if not (times[0] <= t <= times[-1]):
        raise OutOfRangeError(f"t={t!r} outside timeline [{times[0]!r}, {times[-1]!r}]")
    i = bisect.bisect_left(times, t)
    if times[i] == t:
        return timeline.rotations[i].copy()
    t0, t1 = times[i - 1], times[i]
    s = (t - t0) / (t1 - t0)
    return quat_slerp(timeline.rotations[i - 1], timeline.rotations[i], s)
