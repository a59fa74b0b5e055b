"""Stability diagnostics: head trajectory, power spectrum, deviation and smoothness series."""
from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InvalidArgumentError
from .geometry import project_point, quat_angle
from .trajectory import landmark_center

BAND = (1.0, 8.0)


# ---------------------------------------------------------------- transforms

def fft_radix2(x):
    """Iterative in-place radix-2 decimation-in-time FFT; ``len(x)`` must be a power of two."""
    a = np.array(x, dtype=complex)
    n = len(a)
    if n & (n - 1):
        raise InvalidArgumentError(f"radix-2 FFT needs a power-of-two length, got {n}")
    j = 0
    for i in range(1, n):
        bit = n >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        if i < j:
            a[i], a[j] = a[j], a[i]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(-1, size)
        even = blocks[:, :half].copy()
        odd = blocks[:, half:] * tw
        blocks[:, :half] = even + odd
        blocks[:, half:] = even - odd
        size *= 2
    return a


def _ifft_radix2(x):
    return np.conj(fft_radix2(np.conj(x))) / len(x)


def dft(x):
    """Exact-length DFT: radix-2 directly, otherwise Bluestein's chirp-z through radix-2 FFTs."""
    x = np.asarray(x, dtype=complex)
    n = len(x)
    if n == 0:
        return x
    if n & (n - 1) == 0:
        return fft_radix2(x)
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase argument small and exact
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1 << (2 * n - 1).bit_length()
    a = np.zeros(m, dtype=complex)
    a[:n] = x * chirp
    b = np.zeros(m, dtype=complex)
    b[:n] = np.conj(chirp)
    b[m - n + 1:] = np.conj(chirp[1:][::-1])
    conv = _ifft_radix2(fft_radix2(a) * fft_radix2(b))
    return conv[:n] * chirp


def naive_dft(x):
    x = np.asarray(x, dtype=complex)
    n = len(x)
    return np.array([sum(x[j] * cmath.exp(-2j * math.pi * k * j / n) for j in range(n)) for k in range(n)])


def power_spectrum(series, frame_rate):
    """One-sided power of the mean-removed series (rectangular window).

    Powers are scaled so they sum to the energy of the mean-removed series.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 8:
        raise InvalidArgumentError(f"power spectrum needs at least 8 samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("series contains non-finite values")
    x = x - x.mean()
    spec = dft(x)[: n // 2 + 1]
    power = np.abs(spec) ** 2 / n
    power[1: (n + 1) // 2] *= 2.0
    freqs = np.arange(n // 2 + 1) * (frame_rate / n)
    return freqs, power


def band_power(freqs, powers, band=BAND):
    sel = (freqs >= band[0]) & (freqs <= band[1])
    return float(np.sum(powers[sel]))


# ---------------------------------------------------------------- series

def fill_gaps(series):
    """Linearly interpolate NaN rows (face-lost frames); edges take the nearest value."""
    s = np.array(series, dtype=float)
    flat = s.reshape(len(s), -1)
    idx = np.arange(len(s))
    for c in range(flat.shape[1]):
        good = np.isfinite(flat[:, c])
        if not good.any():
            raise InvalidArgumentError("series has no finite samples")
        flat[:, c] = np.interp(idx, idx[good], flat[good, c])
    return flat.reshape(s.shape)


def head_center_series(frames, landmark_records):
    """Raw and stabilized head-center series; rows for face-lost frames are NaN."""
    if len(frames) != len(landmark_records):
        raise InvalidArgumentError(f"{len(frames)} frames vs {len(landmark_records)} landmark records")
    raw = np.full((len(frames), 2), np.nan)
    stab = np.full((len(frames), 2), np.nan)
    for i, (fr, rec) in enumerate(zip(frames, landmark_records)):
        if fr.frame_index != rec.frame:
            raise InvalidArgumentError(f"frame index mismatch at row {i}: {fr.frame_index} vs {rec.frame}")
        if rec.landmarks is None:
            continue
        c = landmark_center(rec.landmarks)
        raw[i] = c
        stab[i] = project_point(c, fr.homography)
    return raw, stab


def _rotation_of(frame):
    pose = getattr(frame, "virtual_pose", None)
    return pose.rotation if pose is not None else frame.rotation


def _offset_of(frame):
    pose = getattr(frame, "virtual_pose", None)
    return pose.offset if pose is not None else frame.offset


def deviation_series(frames, real_rotations):
    """Per-frame spherical angle between the virtual and real rotations (radians)."""
    if len(frames) != len(real_rotations):
        raise InvalidArgumentError(f"{len(frames)} frames vs {len(real_rotations)} real rotations")
    return np.array([quat_angle(_rotation_of(f), rr) for f, rr in zip(frames, real_rotations)])


def first_difference_norms(frames):
    """Frame-to-frame rotation angle and offset step length."""
    rots = [_rotation_of(f) for f in frames]
    offs = np.array([_offset_of(f) for f in frames]).reshape(-1, 2)
    drot = np.array([quat_angle(a, b) for a, b in zip(rots[1:], rots[:-1])])
    doff = np.linalg.norm(np.diff(offs, axis=0), axis=1)
    return drot, doff


@dataclass
class StabilityReport:
    frame_rate: float
    raw_head: np.ndarray
    stabilized_head: np.ndarray
    frequencies: np.ndarray
    raw_power: np.ndarray          # (n_freq, 2): x and y axes
    stabilized_power: np.ndarray
    raw_band_power: float
    stabilized_band_power: float
    deviation: Optional[np.ndarray]
    rotation_steps: np.ndarray
    offset_steps: np.ndarray

    def summary(self):
        out = {
            "frames": len(self.raw_head),
            "raw_band_power": self.raw_band_power,
            "stabilized_band_power": self.stabilized_band_power,
            "mean_rotation_step": float(np.mean(self.rotation_steps)) if len(self.rotation_steps) else 0.0,
            "mean_offset_step": float(np.mean(self.offset_steps)) if len(self.offset_steps) else 0.0,
        }
        if self.deviation is not None:
            out["max_deviation"] = float(np.max(self.deviation))
            out["mean_deviation"] = float(np.mean(self.deviation))
        return out


def head_band_power(frames, landmark_records, frame_rate, band=BAND):
    """Band power (x plus y) of the stabilized head-center series."""
    _, stab = head_center_series(frames, landmark_records)
    stab = fill_gaps(stab)
    total = 0.0
    for axis in range(2):
        f, p = power_spectrum(stab[:, axis], frame_rate)
        total += band_power(f, p, band)
    return total


def stability_report(frames, landmark_records, frame_rate, real_rotations=None):
    raw, stab = head_center_series(frames, landmark_records)
    raw_f, stab_f = fill_gaps(raw), fill_gaps(stab)
    spectra = {}
    for name, series in (("raw", raw_f), ("stab", stab_f)):
        cols = []
        for axis in range(2):
            freqs, p = power_spectrum(series[:, axis], frame_rate)
            cols.append(p)
        spectra[name] = np.column_stack(cols)
    drot, doff = first_difference_norms(frames)
    return StabilityReport(
        frame_rate=frame_rate,
        raw_head=raw,
        stabilized_head=stab,
        frequencies=freqs,
        raw_power=spectra["raw"],
        stabilized_power=spectra["stab"],
        raw_band_power=band_power(freqs, spectra["raw"].sum(axis=1)),
        stabilized_band_power=band_power(freqs, spectra["stab"].sum(axis=1)),
        deviation=None if real_rotations is None else deviation_series(frames, real_rotations),
        rotation_steps=drot,
        offset_steps=doff,
    )


def write_report(report, prefix):
    """Write the report as CSV tables ``<prefix>_{trajectory,spectrum,smoothness,summary}.csv``."""
    paths = []

    def table(suffix, header, rows):
        path = f"{prefix}_{suffix}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        paths.append(path)

    table("trajectory", ["frame", "raw_x", "raw_y", "stabilized_x", "stabilized_y"],
          [[i, *map(repr, r), *map(repr, s)] for i, (r, s) in enumerate(zip(report.raw_head, report.stabilized_head))])
    table("spectrum", ["frequency_hz", "raw_power_x", "raw_power_y", "stabilized_power_x", "stabilized_power_y"],
          [[repr(f), *map(repr, r), *map(repr, s)]
           for f, r, s in zip(report.frequencies, report.raw_power, report.stabilized_power)])
    table("smoothness", ["step", "rotation_step_rad", "offset_step"],
          [[i + 1, repr(a), repr(b)] for i, (a, b) in enumerate(zip(report.rotation_steps, report.offset_steps))])
    if report.deviation is not None:
        table("deviation", ["frame", "deviation_rad"], [[i, repr(d)] for i, d in enumerate(report.deviation)])
    table("summary", ["metric", "value"], [[k, repr(v)] for k, v in report.summary().items()])
    return paths
