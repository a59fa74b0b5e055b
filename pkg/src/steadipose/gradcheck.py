"""Random frame fixtures and the finite-difference Jacobian check behind ``steadipose gradcheck``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraPose, Intrinsics, projection_homography, quat_angle, quat_compose, quat_exp, project_point
from .objective import FrameContext, ObjectiveWeights, residuals, residuals_and_jacobian
from .scenarios import face_template
from .solver import retract
from .trajectory import LandmarkSet, landmark_center

FD_STEP = 1e-6
# entries below this fraction of the largest entry are compared absolutely;
# central differences at h=1e-6 carry ~1e-10 of round-off
ABS_FLOOR = 1e-5


def _random_rotation(rng, max_angle):
    axis = rng.normal(size=3)
    return quat_exp(axis / np.linalg.norm(axis) * rng.uniform(0.0, max_angle))


def random_frame(rng, n_landmarks=133, focal=1.0):
    """A plausible frame: random real/virtual poses, history, landmarks and target.

    Returns ``(virtual_pose, ctx)``. Offsets occasionally push the crop past the
    boundary so the protrusion residual is exercised too.
    """
    rr = _random_rotation(rng, 0.4)
    real = CameraPose(rr, (0.0, 0.0))
    big = rng.uniform() < 0.3

    def near(base, spread):
        rot = quat_compose(_random_rotation(rng, spread), base)
        off = rng.uniform(-0.16 if big else -0.05, 0.16 if big else 0.05, 2)
        return CameraPose(rot, off)

    pv = near(rr, 0.15)
    prev1 = near(pv.rotation, 0.05)
    prev2 = near(prev1.rotation, 0.05)
    intr = Intrinsics(focal)
    shift = rng.uniform(-0.1, 0.1, 2)
    pts = face_template(n_landmarks, center=0.5 + shift)
    pts = pts + rng.normal(scale=0.002, size=pts.shape)
    # place the face where the virtual camera would see it near the target
    h_inv = np.linalg.inv(projection_homography(pv, real, intr, intr))
    pts = project_point(pts, h_inv)
    lms = LandmarkSet(pts)
    target = landmark_center(project_point(pts, projection_homography(pv, real, intr, intr)))
    target = target + rng.normal(scale=0.02, size=2)
    ctx = FrameContext(real, lms, target, prev1, prev2, intr, intr)
    return pv, ctx


def finite_difference_jacobian(pose, ctx, w, h=FD_STEP):
    cols = []
    for k in range(5):
        step = np.zeros(5)
        step[k] = h
        rp = residuals(retract(pose, step), ctx, w)
        rm = residuals(retract(pose, -step), ctx, w)
        cols.append((rp - rm) / (2 * h))
    return np.column_stack(cols)


def jacobian_relative_error(analytic, numeric, floor=ABS_FLOOR):
    """Largest entrywise ``|A - N| / max(|N|, floor * max(1, max|N|))``."""
    scale = floor * max(1.0, float(np.max(np.abs(numeric))))
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), scale)))


@dataclass
class GradcheckResult:
    frames: int
    max_relative_error: float
    worst_frame: int

    def passed(self, tol=1e-4):
        return self.max_relative_error < tol


def gradient_check(seed=0, n_frames=100, weights=None, min_angle=1e-4):
    """Compare analytic and central-difference Jacobians on random frames."""
    rng = np.random.default_rng(seed)
    w = weights if weights is not None else ObjectiveWeights()
    worst, worst_i, done = 0.0, -1, 0
    while done < n_frames:
        pv, ctx = random_frame(rng)
        if quat_angle(pv.rotation, ctx.real_pose.rotation) <= min_angle:
            continue
        _, ja = residuals_and_jacobian(pv, ctx, w)
        err = jacobian_relative_error(ja, finite_difference_jacobian(pv, ctx, w))
        if err > worst:
            worst, worst_i = err, done
        done += 1
    return GradcheckResult(n_frames, worst, worst_i)
