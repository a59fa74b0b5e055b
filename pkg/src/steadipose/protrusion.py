"""Protrusion of the stabilized crop beyond the real frame, and the path-search fallback."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError
from .geometry import (CameraPose, intrinsics_inverse, intrinsics_matrix, quat_slerp,
                       quat_to_matrix)

# returned when a crop point maps behind the real camera
PROTRUSION_AT_INFINITY = 1e3
_W_EPS = 1e-9


@dataclass(frozen=True)
class ProtrusionConfig:
    crop_ratio: float = 0.15
    boundary_shrink: float = 0.01
    samples_per_edge: int = 8
    binary_search_steps: int = 16
    tolerance: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.crop_ratio < 0.5:
            raise InvalidArgumentError(f"crop_ratio must lie in (0, 0.5), got {self.crop_ratio}")
        if not 0.0 <= self.boundary_shrink <= 0.1:
            raise InvalidArgumentError(f"boundary_shrink must lie in [0, 0.1], got {self.boundary_shrink}")
        if self.samples_per_edge < 0 or self.binary_search_steps < 1 or self.tolerance < 0:
            raise InvalidArgumentError(f"invalid protrusion settings {self!r}")


def crop_boundary(crop_ratio, samples_per_edge):
    """Corners plus ``samples_per_edge`` interior points per edge of the centered crop, as (n, 3) rays."""
    lo, hi = crop_ratio, 1.0 - crop_ratio
    inner = np.linspace(lo, hi, samples_per_edge + 2)[1:-1]
    pts = [(lo, lo), (hi, lo), (hi, hi), (lo, hi)]
    for v in inner:
        pts += [(v, lo), (hi, v), (v, hi), (lo, v)]
    pts = np.array(pts)
    return np.column_stack([pts, np.ones(len(pts))])


def inverse_map(pv, pr, intr_v, intr_r, pts_h):
    """Map virtual-frame homogeneous points into the real frame; returns (xy, w)."""
    m = (intrinsics_matrix(intr_r, pr.offset) @ quat_to_matrix(pr.rotation)
         @ quat_to_matrix(pv.rotation).T @ intrinsics_inverse(intr_v, pv.offset))
    q = pts_h @ m.T
    return q[:, :2], q[:, 2]


def exceedance(xy, shrink):
    """Signed per-point distance outside the shrunk unit square (negative when inside)."""
    lo, hi = shrink, 1.0 - shrink
    return np.max(np.stack([lo - xy[:, 0], xy[:, 0] - hi, lo - xy[:, 1], xy[:, 1] - hi]), axis=0)


def measure_protrusion(pv, pr, intr_v, intr_r, cfg=ProtrusionConfig()):
    """Return ``(protrusion, at_infinity)``."""
    pts = crop_boundary(cfg.crop_ratio, cfg.samples_per_edge)
    xy, w = inverse_map(pv, pr, intr_v, intr_r, pts)
    if np.any(w < _W_EPS):
        return PROTRUSION_AT_INFINITY, True
    return max(0.0, float(np.max(exceedance(xy / w[:, None], cfg.boundary_shrink)))), False


def protrude(pv, pr, intr_v, intr_r, cfg=ProtrusionConfig()):
    return measure_protrusion(pv, pr, intr_v, intr_r, cfg)[0]


def path_pose(pv, pr, s):
    """Pose at parameter ``s`` on the path from ``pv`` (s=0) to ``pr`` (s=1)."""
    rot = quat_slerp(pv.rotation, pr.rotation, s)
    return CameraPose(rot, (1.0 - s) * pv.offset + s * pr.offset)


def binary_search_path(pv, pr, intr_v, intr_r, cfg=ProtrusionConfig()):
    """Smallest path parameter found whose pose protrudes at most ``cfg.tolerance``.

    Returns ``None`` when even the real pose protrudes.
    """
    def ok(s):
        return protrude(path_pose(pv, pr, s), pr, intr_v, intr_r, cfg) <= cfg.tolerance

    if ok(0.0):
        return 0.0
    if not ok(1.0):
        return None
    lo, hi = 0.0, 1.0
    for _ in range(cfg.binary_search_steps):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def binary_search_pose(pv, pr, ctx, cfg=ProtrusionConfig()):
    """Pull ``pv`` toward ``pr`` until the crop is covered; ``None`` signals failure."""
    s = binary_search_path(pv, pr, ctx.intr_v, ctx.intr_r, cfg)
    if s is None:
        return None
    return pv if s == 0.0 else path_pose(pv, pr, s)


def smooth_positive_max(values, beta):
    """``log(1 + sum(exp(beta * v))) / beta``: a smooth stand-in for ``max(0, max(values))``.

    Returns the value and its gradient with respect to ``values``. With a single
    value this is the softplus.
    """
    z = beta * np.asarray(values, dtype=float).ravel()
    top = max(0.0, float(z.max()))
    ez = np.exp(z - top)
    total = math.exp(-top) + float(ez.sum())
    return (top + math.log(total)) / beta, ez / total
