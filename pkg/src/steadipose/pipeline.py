"""Causal per-frame stabilization: head target, weight schedule, warm start, solve, safeguard."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional

import numpy as np

from .config import StabilizerConfig
from .exceptions import PointAtInfinityError, SolverError, SteadiposeError, StreamError
from .geometry import (CameraPose, projection_homography, quat_angle, quat_canonical,
                       quat_compose, quat_conj, quat_inverse, quat_mul, warp_mesh)
from .objective import FrameContext
from .protrusion import binary_search_pose, measure_protrusion
from .scheduler import SchedulerState, ScheduledWeights, update_and_schedule
from .solver import SolveReport, solve
from .trajectory import LandmarkSet, landmark_center, smooth_head_center


@dataclass(frozen=True)
class FrameObservation:
    frame_index: int
    t: float
    real_rotation: np.ndarray
    landmarks: Optional[LandmarkSet] = None

    def __post_init__(self):
        object.__setattr__(self, "real_rotation", quat_canonical(self.real_rotation))


@dataclass
class StabilizedFrame:
    frame_index: int
    t: float
    virtual_pose: CameraPose
    real_rotation: np.ndarray
    homography: np.ndarray
    warp_mesh: np.ndarray
    head_center_target: Optional[np.ndarray]
    protrusion: float
    solver_report: SolveReport
    fallback_used: bool
    scheduled_weights: ScheduledWeights
    face_present: bool = True
    protrusion_at_infinity: bool = False
    fitting_dropped: bool = False


@dataclass
class StreamState:
    config: StabilizerConfig
    scheduler: SchedulerState
    last_index: Optional[int] = None
    last_t: Optional[float] = None
    history: int = 0
    prev_virtual: CameraPose = field(default_factory=CameraPose.identity)
    prev_prev_virtual: CameraPose = field(default_factory=CameraPose.identity)
    prev_head: Optional[np.ndarray] = None
    prev_homography: Optional[np.ndarray] = None
    prev_real_rotation: Optional[np.ndarray] = None


def init_stream(config=None):
    """Fresh stream state; the first frame starts from identity rotation and zero offset."""
    config = StabilizerConfig() if config is None else config
    return StreamState(config=config, scheduler=SchedulerState(config.scheduler))


def warm_start(state, real_rotation):
    """Carry the previous virtual pose forward by the real camera's incremental rotation."""
    if state.history == 0 or state.prev_real_rotation is None:
        return CameraPose.identity()
    increment = quat_compose(real_rotation, quat_inverse(state.prev_real_rotation))
    return CameraPose(quat_compose(increment, state.prev_virtual.rotation), state.prev_virtual.offset)


def _frame_weights(state, obs, omega_mag):
    cfg = state.config
    if cfg.dynamic_weights:
        scheduled = update_and_schedule(state.scheduler, omega_mag, obs.landmarks, cfg.weights)
    else:
        scheduled = ScheduledWeights(cfg.weights)
    w = scheduled.weights
    changes = {}
    if obs.landmarks is None:
        changes["w_f"] = 0.0
    if state.history < 2:
        changes.update(w_r_c1=0.0, w_t_c1=0.0)
    if state.history < 1:
        changes.update(w_r_c0=0.0, w_t_c0=0.0)
    if changes:
        w = replace(w, **changes)
    return w, scheduled


def process_frame(state, obs):
    """Stabilize one frame, advancing ``state`` in place."""
    cfg = state.config
    idx = obs.frame_index
    if state.last_index is not None:
        if idx != state.last_index + 1:
            raise StreamError(f"expected frame {state.last_index + 1}, got {idx}", idx)
        if not obs.t > state.last_t:
            raise StreamError(f"timestamp {obs.t!r} does not advance past {state.last_t!r}", idx)
    try:
        return _process(state, obs, cfg)
    except StreamError:
        raise
    except (SteadiposeError, ArithmeticError, ValueError) as exc:
        raise StreamError(str(exc), idx) from exc


def _process(state, obs, cfg):
    rr = obs.real_rotation
    real_pose = CameraPose(rr, (0.0, 0.0))

    if obs.landmarks is not None:
        center = landmark_center(obs.landmarks)
        if state.prev_head is None:
            head = center
        else:
            head = smooth_head_center(state.prev_head, center, cfg.trajectory_params)
    else:
        head = state.prev_head

    omega_mag = 0.0
    if state.prev_real_rotation is not None:
        omega_mag = quat_angle(rr, state.prev_real_rotation) / (obs.t - state.last_t)
    weights, scheduled = _frame_weights(state, obs, omega_mag)

    ctx = FrameContext(
        real_pose=real_pose,
        landmarks=obs.landmarks,
        target_H=head,
        prev_virtual=state.prev_virtual,
        prev_prev_virtual=state.prev_prev_virtual,
        intr_v=cfg.intr_v,
        intr_r=cfg.intr_r,
        crop_ratio=cfg.crop_ratio,
        boundary_shrink=cfg.boundary_shrink,
        samples_per_edge=cfg.samples_per_edge,
    )
    start = warm_start(state, rr)
    fitting_dropped = False
    try:
        pose, report = solve(start, ctx, weights, cfg.solver)
    except SolverError as exc:
        if obs.landmarks is None or not isinstance(exc.__cause__, PointAtInfinityError):
            raise
        # landmarks the virtual camera cannot image are unusable; treat the face as lost
        fitting_dropped = True
        weights = replace(weights, w_f=0.0)
        ctx = replace(ctx, landmarks=None)
        pose, report = solve(start, ctx, weights, cfg.solver)

    pcfg = cfg.protrusion_config
    protrusion, at_inf = measure_protrusion(pose, real_pose, cfg.intr_v, cfg.intr_r, pcfg)
    fallback = False
    homography = None
    if protrusion > pcfg.tolerance:
        searched = binary_search_pose(pose, real_pose, ctx, pcfg)
        if searched is None:
            fallback = True
            pose, homography = _fallback(state, real_pose, cfg)
        else:
            pose = searched
        protrusion, at_inf = measure_protrusion(pose, real_pose, cfg.intr_v, cfg.intr_r, pcfg)
    if homography is None:
        homography = projection_homography(pose, real_pose, cfg.intr_v, cfg.intr_r)

    frame = StabilizedFrame(
        frame_index=obs.frame_index,
        t=obs.t,
        virtual_pose=pose,
        real_rotation=rr,
        homography=homography,
        warp_mesh=warp_mesh(homography, cfg.mesh_rows, cfg.mesh_cols),
        head_center_target=None if head is None else np.array(head),
        protrusion=protrusion,
        solver_report=report,
        fallback_used=fallback,
        scheduled_weights=scheduled,
        face_present=obs.landmarks is not None,
        protrusion_at_infinity=at_inf,
        fitting_dropped=fitting_dropped,
    )

    state.prev_prev_virtual = state.prev_virtual
    state.prev_virtual = pose
    state.history = min(2, state.history + 1)
    state.prev_head = head
    state.prev_homography = homography
    state.prev_real_rotation = rr
    state.last_index = obs.frame_index
    state.last_t = obs.t
    return frame


def _fallback(state, real_pose, cfg):
    """Reuse the previous warp verbatim; the recorded pose is the one that reproduces it."""
    if state.prev_homography is None:
        return real_pose, projection_homography(real_pose, real_pose, cfg.intr_v, cfg.intr_r)
    prev = state.prev_virtual
    rot = quat_canonical(quat_mul(quat_mul(prev.rotation, quat_conj(state.prev_real_rotation)),
                                  real_pose.rotation))
    return CameraPose(rot, prev.offset), state.prev_homography.copy()


def process_stream(observations: Iterable[FrameObservation], config=None) -> List[StabilizedFrame]:
    state = init_stream(config)
    return [process_frame(state, obs) for obs in observations]
