"""Six-term virtual-camera objective: per-term energies, stacked residuals and Jacobian.

The solver works on five parameters: a rotation-vector increment ``delta`` applied
by left retraction (``exp(delta) * r_v``) and the principal offset ``(tx, ty)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .exceptions import InvalidArgumentError, PointAtInfinityError
from .geometry import (CameraPose, Intrinsics, intrinsics_inverse, intrinsics_matrix,
                       project_point, projection_homography, quat_conj, quat_dot, quat_mul,
                       quat_to_matrix)
from .protrusion import (PROTRUSION_AT_INFINITY, ProtrusionConfig, crop_boundary,
                         inverse_map, measure_protrusion, smooth_positive_max)
from .trajectory import LandmarkSet

N_PARAMS = 5
_W_EPS = 1e-9


@dataclass(frozen=True)
class ObjectiveWeights:
    w_f: float = 1.0
    w_d: float = 50.0
    w_o: float = 2.0
    w_r_c0: float = 200.0
    w_r_c1: float = 500.0
    w_t_c0: float = 200.0
    w_t_c1: float = 500.0
    w_p: float = 100.0
    alpha: float = 0.02
    logistic_theta: float = 0.05
    logistic_k: float = 200.0
    protrusion_beta: float = 200.0

    def __post_init__(self):
        for name in ("w_f", "w_d", "w_o", "w_r_c0", "w_r_c1", "w_t_c0", "w_t_c1", "w_p",
                     "logistic_theta"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidArgumentError(f"{name} must be a finite non-negative number, got {v}")
        if not (self.alpha > 0 and self.logistic_k > 0 and self.protrusion_beta > 0):
            raise InvalidArgumentError("alpha, logistic_k and protrusion_beta must be positive")

    def with_(self, **changes):
        return replace(self, **changes)


# term name -> weight fields it owns; used by ablation switches
TERM_WEIGHTS = {
    "fitting": ("w_f",),
    "distortion": ("w_d",),
    "following": ("w_o",),
    "rotation_smoothness": ("w_r_c0", "w_r_c1"),
    "translation_smoothness": ("w_t_c0", "w_t_c1"),
    "protrusion": ("w_p",),
}


def ablate(weights, *terms):
    """Copy of ``weights`` with every named term switched off."""
    changes = {}
    for term in terms:
        if term == "smoothness":
            fields = TERM_WEIGHTS["rotation_smoothness"] + TERM_WEIGHTS["translation_smoothness"]
        elif term in TERM_WEIGHTS:
            fields = TERM_WEIGHTS[term]
        else:
            raise InvalidArgumentError(f"unknown term {term!r}; expected one of "
                                       f"{sorted(TERM_WEIGHTS) + ['smoothness']}")
        changes.update({f: 0.0 for f in fields})
    return replace(weights, **changes)


@dataclass(frozen=True)
class FrameContext:
    """Everything fixed while one frame's virtual pose is optimized."""

    real_pose: CameraPose
    landmarks: Optional[LandmarkSet]
    target_H: Optional[np.ndarray]
    prev_virtual: CameraPose
    prev_prev_virtual: CameraPose
    intr_v: Intrinsics = Intrinsics()
    intr_r: Intrinsics = Intrinsics()
    crop_ratio: float = 0.15
    boundary_shrink: float = 0.01
    samples_per_edge: int = 8

    def __post_init__(self):
        if not 0.0 < self.crop_ratio < 0.5:
            raise InvalidArgumentError(f"crop_ratio must lie in (0, 0.5), got {self.crop_ratio}")
        if self.target_H is not None:
            object.__setattr__(self, "target_H", np.asarray(self.target_H, dtype=float))

    @property
    def has_fitting(self):
        return self.landmarks is not None and self.target_H is not None

    @cached_property
    def protrusion_config(self):
        return ProtrusionConfig(self.crop_ratio, self.boundary_shrink, self.samples_per_edge)

    @cached_property
    def _rays(self):
        # R_r^T K_r^-1 [L, 1]: landmark viewing rays in the world frame, shape (n, 3)
        pts = self.landmarks.points
        m = quat_to_matrix(self.real_pose.rotation).T @ intrinsics_inverse(self.intr_r, self.real_pose.offset)
        return pts @ m[:, :2].T + m[:, 2]

    @cached_property
    def _crop_points(self):
        return crop_boundary(self.crop_ratio, self.samples_per_edge)

    @cached_property
    def _real_projection(self):
        return intrinsics_matrix(self.intr_r, self.real_pose.offset) @ quat_to_matrix(self.real_pose.rotation)


def _logistic(x, k, theta):
    z = -k * (x - theta)
    if z > 0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


# ---------------------------------------------------------------- per-term energies

def term_fitting(pv, ctx):
    if not ctx.has_fitting:
        return 0.0
    h = projection_homography(pv, ctx.real_pose, ctx.intr_v, ctx.intr_r)
    proj = project_point(ctx.landmarks.points, h)
    return float(np.sum((proj - ctx.target_H) ** 2))


def spherical_angle(a, b):
    c = min(1.0, abs(quat_dot(a, b)))
    return 2.0 * math.acos(c)


def term_distortion(rv, rr, w):
    omega = spherical_angle(rv, rr)
    return (_logistic(omega, w.logistic_k, w.logistic_theta) * omega) ** 2


def _aligned_sqdist(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if quat_dot(a, b) < 0.0:
        a = -a
    return float(np.sum((a - b) ** 2))


def term_following(rv, rr):
    return _aligned_sqdist(rv, rr)


def term_rotation_smoothness(rv, rv_prev1, rv_prev2, w):
    c0 = _aligned_sqdist(rv, rv_prev1)
    c1 = _aligned_sqdist(quat_mul(rv, quat_conj(rv_prev1)), quat_mul(rv_prev1, quat_conj(rv_prev2)))
    return w.w_r_c0 * c0 + w.w_r_c1 * c1


def term_translation_smoothness(t, t_prev1, t_prev2, w):
    t, t1, t2 = (np.asarray(v, dtype=float) for v in (t, t_prev1, t_prev2))
    return float(w.w_t_c0 * np.sum((t - t1) ** 2) + w.w_t_c1 * np.sum((2 * t1 - (t + t2)) ** 2))


def corner_exceedances(pv, ctx):
    """Signed distances (4, 2) of the crop corners, pulled back into the real frame,
    outside the shrunk unit square per axis; ``None`` when a corner maps to infinity."""
    xy, wz = inverse_map(pv, ctx.real_pose, ctx.intr_v, ctx.intr_r, ctx._crop_points[:4])
    if np.any(wz < _W_EPS):
        return None
    return np.abs(xy / wz[:, None] - 0.5) - (0.5 - ctx.boundary_shrink)


def term_protrusion(pv, ctx, w, smooth=False):
    """``(protrude / alpha)^2``.

    ``smooth=True`` swaps ``max(0, e)`` for a log-sum-exp over zero and every corner
    exceedance. That is the variant the solver minimizes and the one ``total_energy`` uses.
    """
    if smooth:
        e = corner_exceedances(pv, ctx)
        amount = PROTRUSION_AT_INFINITY if e is None else smooth_positive_max(e, w.protrusion_beta)[0]
    else:
        amount = measure_protrusion(pv, ctx.real_pose, ctx.intr_v, ctx.intr_r, ctx.protrusion_config)[0]
    return (amount / w.alpha) ** 2


def total_energy(pv, ctx, w):
    rv, rr = pv.rotation, ctx.real_pose.rotation
    return (w.w_f * term_fitting(pv, ctx)
            + w.w_d * term_distortion(rv, rr, w)
            + w.w_o * term_following(rv, rr)
            + term_rotation_smoothness(rv, ctx.prev_virtual.rotation, ctx.prev_prev_virtual.rotation, w)
            + term_translation_smoothness(pv.offset, ctx.prev_virtual.offset, ctx.prev_prev_virtual.offset, w)
            + w.w_p * term_protrusion(pv, ctx, w, smooth=True))


# ---------------------------------------------------------------- residuals

def _lift(q):
    """Columns are d(exp(delta) * q)/d(delta_k) at delta = 0."""
    w, x, y, z = q
    return 0.5 * np.array([
        [-x, -y, -z],
        [w, z, -y],
        [-z, w, x],
        [y, -x, w],
    ])


def _cross_columns(v):
    """Matrix whose column k is ``e_k x v``."""
    x, y, z = v
    return np.array([
        [0.0, z, -y],
        [-z, 0.0, x],
        [y, -x, 0.0],
    ])


def residuals(pv, ctx, w):
    return _assemble(pv, ctx, w, False)[0]


def residuals_and_jacobian(pv, ctx, w):
    """Stacked weighted residuals ``r`` (``|r|^2 == total_energy``) and ``dr/d(delta, tx, ty)``."""
    return _assemble(pv, ctx, w, True)


def _assemble(pv, ctx, w, jac):
    rv = pv.rotation
    t = pv.offset
    rr = ctx.real_pose.rotation
    res = []
    jacs = []

    if ctx.has_fitting and w.w_f > 0.0:
        _fitting_block(pv, ctx, w, jac, res, jacs)

    # distortion: one row, sigma(Omega) * Omega
    d = quat_mul(rv, quat_conj(rr))
    if d[0] < 0.0:
        d = -d
    n = math.sqrt(d[1] * d[1] + d[2] * d[2] + d[3] * d[3])
    omega = 2.0 * math.atan2(n, d[0])
    sig = _logistic(omega, w.logistic_k, w.logistic_theta)
    sw = math.sqrt(w.w_d)
    res.append([sw * sig * omega])
    if jac:
        if n < 1e-12:
            jacs.append(np.zeros((1, N_PARAMS)))
        else:
            dd = _lift(d)
            dn = d[1:] @ dd[1:] / n
            domega = 2.0 * (d[0] * dn - n * dd[0]) / (d[0] * d[0] + n * n)
            dsig = w.logistic_k * sig * (1.0 - sig)
            row = np.zeros((1, N_PARAMS))
            row[0, :3] = sw * (dsig * omega + sig) * domega
            jacs.append(row)

    # rotation following, rotation C0 and C1: 4 rows each, sign-aligned
    rv1, rv2 = ctx.prev_virtual.rotation, ctx.prev_prev_virtual.rotation
    a = quat_mul(rv, quat_conj(rv1))
    b = quat_mul(rv1, quat_conj(rv2))
    for weight, q, ref in ((w.w_o, rv, rr), (w.w_r_c0, rv, rv1), (w.w_r_c1, a, b)):
        sw = math.sqrt(weight)
        s = -1.0 if quat_dot(q, ref) < 0.0 else 1.0
        res.append(sw * (s * q - ref))
        if jac:
            block = np.zeros((4, N_PARAMS))
            block[:, :3] = (sw * s) * _lift(q)
            jacs.append(block)

    # translation C0 and C1
    t1, t2 = ctx.prev_virtual.offset, ctx.prev_prev_virtual.offset
    s0, s1 = math.sqrt(w.w_t_c0), math.sqrt(w.w_t_c1)
    res.append(s0 * (t - t1))
    res.append(s1 * (2.0 * t1 - (t + t2)))
    if jac:
        block = np.zeros((4, N_PARAMS))
        block[0, 3] = block[1, 4] = s0
        block[2, 3] = block[3, 4] = -s1
        jacs.append(block)

    _protrusion_block(pv, ctx, w, jac, res, jacs)

    r = np.concatenate([np.ravel(x) for x in res])
    return (r, np.vstack(jacs)) if jac else (r, None)


def _fitting_block(pv, ctx, w, jac, res, jacs):
    a = ctx._rays @ quat_to_matrix(pv.rotation).T
    f = ctx.intr_v.focal
    cx = ctx.intr_v.cx + pv.offset[0]
    cy = ctx.intr_v.cy + pv.offset[1]
    az = a[:, 2]
    if np.any(az < _W_EPS):
        raise PointAtInfinityError("landmark projects to infinity in the virtual frame")
    ux = (f * a[:, 0] + cx * az) / az
    uy = (f * a[:, 1] + cy * az) / az
    sw = math.sqrt(w.w_f)
    res.append(sw * (ux - ctx.target_H[0]))
    res.append(sw * (uy - ctx.target_H[1]))
    if not jac:
        return
    n = len(az)
    # d a / d delta_k = e_k x a
    dax = np.column_stack([np.zeros(n), a[:, 2], -a[:, 1]])
    day = np.column_stack([-a[:, 2], np.zeros(n), a[:, 0]])
    daz = np.column_stack([a[:, 1], -a[:, 0], np.zeros(n)])
    inv_z = (1.0 / az)[:, None]
    jx = np.zeros((n, N_PARAMS))
    jy = np.zeros((n, N_PARAMS))
    # p = K_v a, u = p_xy / p_z with p_z = a_z
    jx[:, :3] = (f * dax + cx * daz - ux[:, None] * daz) * inv_z
    jy[:, :3] = (f * day + cy * daz - uy[:, None] * daz) * inv_z
    jx[:, 3] = 1.0
    jy[:, 4] = 1.0
    jacs.append(sw * jx)
    jacs.append(sw * jy)


def _protrusion_block(pv, ctx, w, jac, res, jacs):
    sw = math.sqrt(w.w_p) / w.alpha
    # a homography maps crop edges to segments, so the corners carry the extreme values
    pts = ctx._crop_points[:4]
    kv_inv = intrinsics_inverse(ctx.intr_v, pv.offset)
    v = pts @ kv_inv.T                        # K_v^-1 b, (4, 3)
    a_mat = ctx._real_projection @ quat_to_matrix(pv.rotation).T
    m = v @ a_mat.T                           # K_r R_r R_v^T K_v^-1 b
    if np.any(m[:, 2] < _W_EPS):
        res.append([sw * PROTRUSION_AT_INFINITY])
        if jac:
            jacs.append(np.zeros((1, N_PARAMS)))
        return
    xy = m[:, :2] / m[:, 2:3]
    e = np.abs(xy - 0.5) - (0.5 - ctx.boundary_shrink)
    value, weight = smooth_positive_max(e, w.protrusion_beta)
    res.append([sw * value])
    if not jac:
        return
    row = np.zeros(N_PARAMS)
    sign = np.where(xy > 0.5, 1.0, -1.0)
    bz_f = pts[:, 2] / ctx.intr_v.focal
    for j in range(len(pts)):
        dm = np.empty((3, N_PARAMS))
        dm[:, :3] = -a_mat @ _cross_columns(v[j])
        dm[:, 3] = a_mat[:, 0] * -bz_f[j]
        dm[:, 4] = a_mat[:, 1] * -bz_f[j]
        for axis in range(2):
            dcoord = (dm[axis] - xy[j, axis] * dm[2]) / m[j, 2]
            row += weight[2 * j + axis] * sign[j, axis] * dcoord
    jacs.append((sw * row)[None, :])
