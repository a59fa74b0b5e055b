"""Quaternion algebra, camera intrinsics and the real-to-virtual homography.

Quaternions are stored scalar-first as float arrays ``(w, x, y, z)`` and use
the Hamilton product. Every function that returns a rotation returns it
unit-norm and hemisphere-canonical (``w >= 0``; ties on ``w == 0`` are broken
by the first non-zero vector component being positive).

Image coordinates are normalized so the frame spans ``[0, 1]`` on both axes
with the principal point at ``0.5``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError, PointAtInfinityError

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])
_EPS_W = 1e-9
_DET_EPS = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def quat_canonical(q):
    """Return the unit quaternion on the ``w >= 0`` hemisphere."""
    q = np.asarray(q, dtype=float)
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n == 0.0 or not math.isfinite(n):
        raise InvalidArgumentError(f"cannot normalize quaternion {q!r}")
    q = q / n
    for c in q:
        if c != 0.0:
            return -q if c < 0.0 else q
    return q


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    norm = float(np.linalg.norm(axis))
    if norm == 0.0:
        if angle == 0.0:
            return IDENTITY_QUAT.copy()
        raise InvalidArgumentError("zero rotation axis with non-zero angle")
    half = 0.5 * angle
    s = math.sin(half) / norm
    return quat_canonical([math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_exp(rotvec):
    """Exact exponential map from a rotation vector (radians) to a quaternion."""
    vx, vy, vz = float(rotvec[0]), float(rotvec[1]), float(rotvec[2])
    theta = math.sqrt(vx * vx + vy * vy + vz * vz)
    half = 0.5 * theta
    if theta < 1e-8:
        # sin(h)/theta series; exact to double precision at this size
        s = 0.5 - theta * theta / 48.0
        w = 1.0 - half * half / 2.0
    else:
        s = math.sin(half) / theta
        w = math.cos(half)
    return quat_canonical([w, vx * s, vy * s, vz * s])


def quat_log(q):
    """Rotation vector of ``q`` (angle in ``[0, pi]``)."""
    q = quat_canonical(q)
    n = math.sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n < 1e-15:
        return 2.0 * q[1:].copy()
    angle = 2.0 * math.atan2(n, q[0])
    return q[1:] * (angle / n)


def quat_mul(a, b):
    """Raw Hamilton product (no renormalization)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_compose(a, b):
    return quat_canonical(quat_mul(a, b))


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def quat_inverse(q):
    return quat_canonical(quat_conj(q))


def quat_dot(a, b):
    return float(a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3])


def quat_align(q, ref):
    """Flip the sign of ``q`` so that ``<q, ref> >= 0``."""
    return -np.asarray(q, dtype=float) if quat_dot(q, ref) < 0.0 else np.asarray(q, dtype=float)


def quat_angle(a, b):
    """Spherical angle between two rotations, ``2 acos |<a, b>|`` evaluated stably."""
    d = quat_mul(a, quat_conj(b))
    n = math.sqrt(d[1] * d[1] + d[2] * d[2] + d[3] * d[3])
    return 2.0 * math.atan2(n, abs(d[0]))


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_slerp(a, b, s):
    """Spherical interpolation from ``a`` (s=0) to ``b`` (s=1) along the short arc."""
    a = np.asarray(a, dtype=float)
    b = quat_align(b, a)
    c = min(1.0, quat_dot(a, b))
    theta = math.acos(c)
    if theta < 1e-10:
        return quat_canonical(a + s * (b - a))
    st = math.sin(theta)
    return quat_canonical((math.sin((1 - s) * theta) / st) * a + (math.sin(s * theta) / st) * b)


@dataclass(frozen=True)
class Intrinsics:
    focal: float = 1.0
    cx: float = 0.5
    cy: float = 0.5

    def __post_init__(self):
        if not (self.focal > 0 and math.isfinite(self.focal)):
            raise InvalidArgumentError(f"focal must be positive, got {self.focal}")


@dataclass(frozen=True)
class CameraPose:
    """Rotation quaternion plus 2D principal offset ``(tx, ty)``."""

    rotation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT)
    offset: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        offset = np.asarray(self.offset, dtype=float)
        if offset.shape != (2,) or not np.all(np.isfinite(offset)):
            raise InvalidArgumentError(f"offset must be 2 finite values, got {self.offset!r}")
        object.__setattr__(self, "rotation", _frozen(quat_canonical(self.rotation)))
        object.__setattr__(self, "offset", _frozen(offset))

    @classmethod
    def identity(cls):
        return cls(IDENTITY_QUAT, np.zeros(2))

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.offset, other.offset))

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.offset.tobytes()))


def make_homography(m):
    """Validate a 3x3 matrix and scale it so entry (2, 2) equals 1."""
    m = np.array(m, dtype=float)
    if m.shape != (3, 3):
        raise InvalidArgumentError(f"homography must be 3x3, got shape {m.shape}")
    if abs(m[2, 2]) < _DET_EPS:
        raise InvalidArgumentError("homography has a vanishing (2, 2) entry")
    m = m / m[2, 2]
    m[2, 2] = 1.0
    if abs(np.linalg.det(m)) <= _DET_EPS:
        raise InvalidArgumentError("homography is singular")
    return m


def intrinsics_matrix(intr, offset=(0.0, 0.0)):
    return np.array([
        [intr.focal, 0.0, intr.cx + offset[0]],
        [0.0, intr.focal, intr.cy + offset[1]],
        [0.0, 0.0, 1.0],
    ])


def intrinsics_inverse(intr, offset=(0.0, 0.0)):
    f = intr.focal
    return np.array([
        [1.0 / f, 0.0, -(intr.cx + offset[0]) / f],
        [0.0, 1.0 / f, -(intr.cy + offset[1]) / f],
        [0.0, 0.0, 1.0],
    ])


def projection_homography(virtual, real, intr_v, intr_r):
    """``K_v R_v (K_r R_r)^-1``: maps real-frame points into the virtual frame."""
    kv = intrinsics_matrix(intr_v, virtual.offset)
    rel = quat_to_matrix(virtual.rotation) @ quat_to_matrix(real.rotation).T
    kr_inv = intrinsics_inverse(intr_r, real.offset)
    m = kv @ rel @ kr_inv
    assert abs(m[2, 2]) > _DET_EPS, "projection homography degenerated"
    return make_homography(m)


def project_point(p, h):
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    u = h[0, 0] * x + h[0, 1] * y + h[0, 2]
    v = h[1, 0] * x + h[1, 1] * y + h[1, 2]
    w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    if np.any(np.abs(w) < _EPS_W):
        raise PointAtInfinityError("point maps to infinity under homography")
    return np.stack([u / w, v / w], axis=-1)


def warp_mesh(h, rows, cols):
    """Uniform ``rows x cols`` grid over the unit square mapped through ``h^-1``.

    The result has shape ``(rows, cols, 2)``; entry ``[i, j]`` is the real-frame
    sampling coordinate for the virtual-frame vertex ``(j/(cols-1), i/(rows-1))``.
    """
    if rows < 2 or cols < 2:
        raise InvalidArgumentError("warp mesh needs at least 2 rows and 2 columns")
    h = np.asarray(h, dtype=float)
    if abs(np.linalg.det(h)) <= _DET_EPS:
        raise InvalidArgumentError("cannot invert a singular homography")
    h_inv = np.linalg.inv(h)
    xs, ys = np.meshgrid(np.linspace(0.0, 1.0, cols), np.linspace(0.0, 1.0, rows))
    return project_point(np.stack([xs, ys], axis=-1), h_inv)
