"""Causal face-centric video stabilization from gyro rotations and 2D landmarks."""
from .config import StabilizerConfig, load_config, save_config
from .estimator import FaceStabilizer, HeadTrajectorySmoother
from .geometry import CameraPose, Intrinsics
from .objective import ObjectiveWeights
from .pipeline import FrameObservation, StabilizedFrame, init_stream, process_frame, process_stream
from .scenarios import ScenarioSpec, generate_scenario
from .trajectory import LandmarkSet

__all__ = [
    "CameraPose", "FaceStabilizer", "FrameObservation", "HeadTrajectorySmoother", "Intrinsics",
    "LandmarkSet", "ObjectiveWeights", "ScenarioSpec", "StabilizedFrame", "StabilizerConfig",
    "generate_scenario", "init_stream", "load_config", "process_frame", "process_stream", "save_config",
]
__version__ = "0.1.0"
