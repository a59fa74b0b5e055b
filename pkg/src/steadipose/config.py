"""Stabilizer configuration and its JSON file form."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .exceptions import ConfigError, InvalidArgumentError
from .geometry import Intrinsics
from .objective import ObjectiveWeights
from .protrusion import ProtrusionConfig
from .scheduler import SchedulerParams
from .solver import SolverSettings
from .trajectory import TrajectoryParams


@dataclass(frozen=True)
class StabilizerConfig:
    focal: float = 1.0
    virtual_focal: Optional[float] = None
    crop_ratio: float = 0.15
    boundary_shrink: float = 0.01
    samples_per_edge: int = 8
    binary_search_steps: int = 16
    protrusion_tolerance: float = 1e-4
    head_w1: float = 5000.0
    head_w2: float = 1.0
    head_d_ref: float = 0.03
    mesh_rows: int = 8
    mesh_cols: int = 8
    gyro_alignment: Optional[tuple] = None
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    solver: SolverSettings = field(default_factory=SolverSettings)
    scheduler: SchedulerParams = field(default_factory=SchedulerParams)
    dynamic_weights: bool = True

    def __post_init__(self):
        # build the derived views once so bad values fail here, not mid-stream
        try:
            self.intr_r
            self.intr_v
            self.trajectory_params
            self.protrusion_config
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from exc
        if self.mesh_rows < 2 or self.mesh_cols < 2:
            raise ConfigError("warp mesh needs at least 2 rows and 2 columns")
        if self.gyro_alignment is not None and len(self.gyro_alignment) != 4:
            raise ConfigError("gyro_alignment must be a (w, x, y, z) quaternion")

    @property
    def intr_r(self):
        return Intrinsics(self.focal)

    @property
    def intr_v(self):
        return Intrinsics(self.focal if self.virtual_focal is None else self.virtual_focal)

    @property
    def trajectory_params(self):
        return TrajectoryParams(self.head_w1, self.head_w2, self.head_d_ref, self.crop_ratio)

    @property
    def protrusion_config(self):
        return ProtrusionConfig(self.crop_ratio, self.boundary_shrink, self.samples_per_edge,
                                self.binary_search_steps, self.protrusion_tolerance)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        nested = {"weights": ObjectiveWeights, "solver": SolverSettings, "scheduler": SchedulerParams}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            for key, typ in nested.items():
                if key in data:
                    data[key] = typ(**data[key])
            if data.get("gyro_alignment") is not None:
                data["gyro_alignment"] = tuple(data["gyro_alignment"])
            return cls(**data)
        except (TypeError, InvalidArgumentError) as exc:
            raise ConfigError(str(exc)) from exc


def save_config(config, path):
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return StabilizerConfig.from_dict(data)
