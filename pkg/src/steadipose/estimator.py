"""scikit-learn style wrappers around the streaming stabilizer."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_is_fitted

from .config import StabilizerConfig
from .exceptions import InvalidArgumentError
from .geometry import CameraPose
from .objective import ObjectiveWeights, ablate
from .pipeline import FrameObservation, init_stream, process_frame
from .scheduler import SchedulerParams
from .solver import SolverSettings
from .trajectory import TrajectoryParams, smooth_head_center


def check_observations(X):
    """Validate a sequence of frame observations (strictly increasing index and time)."""
    obs = list(X)
    for i, o in enumerate(obs):
        if not isinstance(o, FrameObservation):
            raise InvalidArgumentError(f"item {i} is a {type(o).__name__}, expected FrameObservation")
        if i and (o.frame_index != obs[i - 1].frame_index + 1 or not o.t > obs[i - 1].t):
            raise InvalidArgumentError(f"observation {i} does not follow observation {i - 1}")
    return obs


class HeadTrajectorySmoother(TransformerMixin, BaseEstimator):
    """Turn a series of landmark centers into the smooth target head-center series.

    ``X`` has shape ``(n_frames, 2)``; rows of NaN mark frames without a face, for
    which the previous target is carried over.
    """

    def __init__(self, w1=5000.0, w2=1.0, d_ref=0.03, crop_ratio=0.15):
        self.w1 = w1
        self.w2 = w2
        self.d_ref = d_ref
        self.crop_ratio = crop_ratio

    def fit(self, X=None, y=None):
        self.params_ = TrajectoryParams(self.w1, self.w2, self.d_ref, self.crop_ratio)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, ensure_all_finite="allow-nan", ensure_min_samples=0)
        if X.shape[1] != 2:
            raise InvalidArgumentError(f"expected 2 columns, got {X.shape[1]}")
        out = np.full_like(X, np.nan)
        prev = None
        for i, c in enumerate(X):
            if np.any(np.isnan(c)):
                if prev is not None:
                    out[i] = prev
                continue
            prev = c.copy() if prev is None else smooth_head_center(prev, c, self.params_)
            out[i] = prev
        return out


class FaceStabilizer(TransformerMixin, BaseEstimator):
    """Causal stabilizer with an estimator interface.

    ``fit`` builds the configuration and opens a fresh stream. ``partial_transform``
    consumes one live frame at a time; ``transform`` runs a whole sequence on an
    independent stream and does not disturb the live one.
    """

    def __init__(self, focal=1.0, virtual_focal=None, crop_ratio=0.15, boundary_shrink=0.01,
                 weights=None, solver=None, scheduler=None, dynamic_weights=True, ablate=(),
                 mesh_shape=(8, 8)):
        self.focal = focal
        self.virtual_focal = virtual_focal
        self.crop_ratio = crop_ratio
        self.boundary_shrink = boundary_shrink
        self.weights = weights
        self.solver = solver
        self.scheduler = scheduler
        self.dynamic_weights = dynamic_weights
        self.ablate = ablate
        self.mesh_shape = mesh_shape

    def _build_config(self):
        weights = self.weights if self.weights is not None else ObjectiveWeights()
        if self.ablate:
            weights = ablate(weights, *self.ablate)
        return StabilizerConfig(
            focal=self.focal,
            virtual_focal=self.virtual_focal,
            crop_ratio=self.crop_ratio,
            boundary_shrink=self.boundary_shrink,
            weights=weights,
            solver=self.solver if self.solver is not None else SolverSettings(),
            scheduler=self.scheduler if self.scheduler is not None else SchedulerParams(),
            dynamic_weights=self.dynamic_weights,
            mesh_rows=self.mesh_shape[0],
            mesh_cols=self.mesh_shape[1],
        )

    @classmethod
    def from_config(cls, config):
        return cls(focal=config.focal, virtual_focal=config.virtual_focal, crop_ratio=config.crop_ratio,
                   boundary_shrink=config.boundary_shrink, weights=config.weights, solver=config.solver,
                   scheduler=config.scheduler, dynamic_weights=config.dynamic_weights,
                   mesh_shape=(config.mesh_rows, config.mesh_cols))

    def fit(self, X=None, y=None):
        self.config_ = self._build_config()
        self.state_ = init_stream(self.config_)
        return self

    def partial_transform(self, observation):
        if not hasattr(self, "state_"):
            raise NotFittedError("call fit() before partial_transform()")
        return process_frame(self.state_, observation)

    def transform(self, X):
        check_is_fitted(self, "config_")
        state = init_stream(self.config_)
        return [process_frame(state, o) for o in check_observations(X)]

    def predict(self, X):
        """Virtual poses as an ``(n, 6)`` array: quaternion ``(w, x, y, z)`` then ``(tx, ty)``."""
        frames = self.transform(X)
        return np.array([np.concatenate([f.virtual_pose.rotation, f.virtual_pose.offset]) for f in frames])

    @staticmethod
    def poses_from_array(arr):
        arr = check_array(arr)
        return [CameraPose(row[:4], row[4:6]) for row in arr]
