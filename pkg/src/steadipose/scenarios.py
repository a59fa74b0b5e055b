"""Seeded synthetic gyro + landmark traces for tests, acceptance runs and the CLI.

The simulated world is consistent with the projection model: each landmark is a
fixed viewing ray (optionally displaced by face motion), imaged by the real camera
as ``K_r R_r X``. A perfectly stabilized virtual camera therefore sees only the
face motion that the gyro cannot explain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .exceptions import ConfigError
from .geometry import Intrinsics, intrinsics_inverse, intrinsics_matrix, quat_exp, quat_to_matrix
from .gyro import GyroSample, integrate, rotation_at
from .trajectory import DEFAULT_LANDMARK_COUNT, LandmarkSet

KINDS = ("static", "handshake", "walk", "pan", "head-turn", "occlusion-dropout")


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "static"
    duration: float = 2.0
    frame_rate: float = 30.0
    seed: int = 0
    gyro_rate: float = 200.0
    focal: float = 1.0
    n_landmarks: int = DEFAULT_LANDMARK_COUNT
    shake_amplitude: float = 0.15       # rad/s, summed 2-8 Hz tones
    shake_noise: float = 0.04           # rad/s, band-limited 2-8 Hz noise
    bounce_amplitude: float = 0.25      # rad/s at the walking cadence
    face_bounce: float = 0.02           # normalized units of face translation while walking
    pan_rate: float = 0.3               # rad/s yaw
    head_amplitude: float = 0.03        # normalized units of head sway
    head_turn_yaw: float = 0.8          # rad reached at the end of the head-turn ramp
    landmark_noise: float = 0.001       # per-landmark jitter, normalized units
    dropout_fraction: float = 0.2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if not (self.duration > 0 and self.frame_rate > 0 and self.gyro_rate > 0):
            raise ConfigError("duration, frame_rate and gyro_rate must be positive")
        if self.n_landmarks < 1:
            raise ConfigError("n_landmarks must be positive")


@dataclass
class LandmarkRecord:
    frame: int
    t: float
    landmarks: Optional[LandmarkSet]


@dataclass
class Scenario:
    spec: ScenarioSpec
    gyro: List[GyroSample]
    landmarks: List[LandmarkRecord]
    truth: dict = field(default_factory=dict)

    def observations(self):
        """Frame observations with real rotations sampled from the integrated gyro."""
        from .pipeline import FrameObservation
        rots = self.truth["real_rotations"]
        return [FrameObservation(rec.frame, rec.t, rots[i], rec.landmarks)
                for i, rec in enumerate(self.landmarks)]


def face_template(n=DEFAULT_LANDMARK_COUNT, center=(0.5, 0.5)):
    """Point-symmetric landmark layout: a contour ring plus interior points, mirrored through the center."""
    rng = np.random.default_rng(133)
    half = n // 2
    n_contour = min(half, max(1, half * 4 // 11))
    ang = np.linspace(0.0, np.pi, n_contour, endpoint=False) + 0.1
    contour = np.column_stack([0.07 * np.cos(ang), 0.09 * np.sin(ang)])
    n_inner = half - n_contour
    r = 0.8 * np.sqrt(rng.uniform(0.05, 1.0, n_inner))
    phi = rng.uniform(0.0, 2 * np.pi, n_inner)
    inner = np.column_stack([0.07 * r * np.cos(phi), 0.09 * r * np.sin(phi)])
    pts = np.vstack([contour, inner])
    pts = np.vstack([pts, -pts])
    if n % 2:
        pts = np.vstack([np.zeros((1, 2)), pts])
    return pts + np.asarray(center)


def _tones(rng, t, lo, hi, count, amplitude):
    out = np.zeros((len(t), 3))
    for _ in range(count):
        f = rng.uniform(lo, hi)
        phase = rng.uniform(0, 2 * np.pi)
        axis = rng.normal(size=3) * np.array([1.0, 1.0, 0.4])
        axis /= np.linalg.norm(axis)
        out += np.outer(np.sin(2 * np.pi * f * t + phase), axis) * (amplitude / np.sqrt(count))
    return out


def _band_noise(rng, n, rate, lo, hi, amplitude):
    white = rng.normal(size=(n, 3))
    spec = np.fft.rfft(white, axis=0)
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    out = np.fft.irfft(spec, n=n, axis=0)
    rms = np.sqrt(np.mean(out ** 2))
    return out * (amplitude / rms) if rms > 0 else out


def _dropout_mask(rng, n_frames, fraction, frame_rate):
    lost = np.zeros(n_frames, dtype=bool)
    target = int(round(fraction * n_frames))
    guard = max(1, int(frame_rate))  # leave the first second visible
    while lost.sum() < target:
        length = int(rng.integers(max(2, int(0.3 * frame_rate)), max(3, int(0.8 * frame_rate))))
        start = int(rng.integers(guard, max(guard + 1, n_frames - length)))
        lost[start:start + length] = True
    return lost


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    rng = np.random.default_rng(spec.seed)
    kind = spec.kind
    n_gyro = int(np.floor(spec.duration * spec.gyro_rate + 1e-9)) + 1
    tg = np.arange(n_gyro) / spec.gyro_rate
    n_frames = int(np.floor(spec.duration * spec.frame_rate + 1e-9))
    tf = np.arange(n_frames) / spec.frame_rate
    # keep the last frame inside the gyro timeline
    tf = tf[tf <= tg[-1]]
    n_frames = len(tf)

    omega = np.zeros((n_gyro, 3))
    pan = np.zeros(3)
    face_shift = np.zeros((n_frames, 2))
    yaw_hint = None
    if kind != "static":
        omega += _tones(rng, tg, 2.0, 8.0, 4, spec.shake_amplitude)
        omega += _band_noise(rng, n_gyro, spec.gyro_rate, 2.0, 8.0, spec.shake_noise)
    if kind == "walk":
        fb = rng.uniform(1.5, 2.0)
        ph = rng.uniform(0, 2 * np.pi)
        omega[:, 0] += spec.bounce_amplitude * np.sin(2 * np.pi * fb * tg + ph)
        omega[:, 1] += 0.5 * spec.bounce_amplitude * np.sin(np.pi * fb * tg + ph)
        face_shift[:, 1] = spec.face_bounce * np.sin(2 * np.pi * fb * tf + ph + 0.7)
        face_shift[:, 0] = 0.5 * spec.face_bounce * np.sin(np.pi * fb * tf + ph + 1.3)
    elif kind == "pan":
        pan = np.array([0.0, spec.pan_rate, 0.0])
        omega += pan
    elif kind == "head-turn":
        fh = rng.uniform(0.2, 0.5)
        face_shift[:, 0] = spec.head_amplitude * np.sin(2 * np.pi * fh * tf)
        yaw_hint = spec.head_turn_yaw * tf / max(tf[-1], 1e-9)

    gyro = [GyroSample(float(t), tuple(float(v) for v in w)) for t, w in zip(tg, omega)]
    timeline = integrate(gyro)
    real_rots = np.array([rotation_at(timeline, float(t)) for t in tf])

    lost = np.zeros(n_frames, dtype=bool)
    if kind == "occlusion-dropout":
        lost = _dropout_mask(rng, n_frames, spec.dropout_fraction, spec.frame_rate)

    intr = Intrinsics(spec.focal)
    k = intrinsics_matrix(intr)
    k_inv = intrinsics_inverse(intr)
    template = face_template(spec.n_landmarks)
    noise_sigma = 0.0 if kind == "static" else spec.landmark_noise
    records, clean_centers = [], []
    for i, t in enumerate(tf):
        pts = template + face_shift[i]
        rays = np.column_stack([pts, np.ones(len(pts))]) @ k_inv.T
        if kind == "pan":
            # the face travels with the panning camera; only the shake moves it in the image
            rays = rays @ quat_to_matrix(quat_exp(pan * t))
        img = rays @ (k @ quat_to_matrix(real_rots[i])).T
        img = img[:, :2] / img[:, 2:3]
        clean_centers.append(img.mean(axis=0))
        if lost[i]:
            records.append(LandmarkRecord(i, float(t), None))
            continue
        if noise_sigma > 0:
            img = img + rng.normal(scale=noise_sigma, size=img.shape)
        hint = None if yaw_hint is None else (float(yaw_hint[i]), 0.0, 0.0)
        records.append(LandmarkRecord(i, float(t), LandmarkSet(img, hint)))

    truth = {
        "frame_times": tf,
        "real_rotations": real_rots,
        "head_center": np.array(clean_centers).reshape(-1, 2),
        "face_shift": face_shift,
        "lost": lost,
    }
    return Scenario(spec, gyro, records, truth)
