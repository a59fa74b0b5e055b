"""Line-record trace files: gyro samples, landmark frames and stabilization results.

Every file opens with a header line::

    #steadipose-trace v1 kind=<gyro|landmarks|results> rate=<f64> n_landmarks=<u32> focal=<f64>

followed by one ``key=value`` record per line. Floats are written with ``repr`` so
a write/read round trip is exact. Landmark coordinates must already be normalized
to the unit frame by the producer.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .exceptions import InvalidTraceError, ParseError, SchemaError
from .gyro import GyroSample
from .scenarios import LandmarkRecord
from .trajectory import LandmarkSet

MAGIC = "#steadipose-trace"
VERSION = "v1"
KINDS = ("gyro", "landmarks", "results")


class TraceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TraceHeader:
    kind: str
    rate: float = 0.0
    n_landmarks: int = 0
    focal: float = 1.0

    def line(self):
        return (f"{MAGIC} {VERSION} kind={self.kind} rate={self.rate!r} "
                f"n_landmarks={self.n_landmarks} focal={self.focal!r}")


@dataclass
class ResultRecord:
    frame_index: int
    t: float
    rotation: np.ndarray
    offset: np.ndarray
    homography: np.ndarray
    head_center_target: Optional[np.ndarray]
    protrusion: float
    iterations: int
    fallback_used: bool


def _fmt(x):
    return repr(float(x))


def _floats(text, lineno, count=None):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ParseError(f"bad number list {text!r}", lineno) from None
    if count is not None and len(vals) != count:
        raise ParseError(f"expected {count} values, got {len(vals)}", lineno)
    return vals


def _fields(line, lineno):
    out = {}
    for tok in line.split():
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise ParseError(f"malformed field {tok!r}", lineno)
        if key in out:
            raise ParseError(f"duplicate field {key!r}", lineno)
        out[key] = value
    return out


def _number(fields, key, lineno, conv=float):
    if key not in fields:
        raise ParseError(f"missing field {key!r}", lineno)
    try:
        return conv(fields[key])
    except ValueError:
        raise ParseError(f"bad value for {key!r}: {fields[key]!r}", lineno) from None


def parse_header(line, expected_kind=None):
    parts = line.split()
    if len(parts) < 2 or parts[0] != MAGIC:
        raise ParseError("missing trace header", 1)
    if parts[1] != VERSION:
        raise InvalidTraceError(f"unsupported trace version {parts[1]!r}")
    f = _fields(" ".join(parts[2:]), 1)
    kind = f.get("kind")
    if kind not in KINDS:
        raise ParseError(f"unknown trace kind {kind!r}", 1)
    if expected_kind is not None and kind != expected_kind:
        raise SchemaError(f"expected a {expected_kind} trace, got {kind}")
    return TraceHeader(kind, _number(f, "rate", 1), _number(f, "n_landmarks", 1, int), _number(f, "focal", 1))


def _read_lines(path, expected_kind):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty trace file", 1)
    header = parse_header(lines[0], expected_kind)
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip() and not ln.startswith("#")]
    return header, body


def read_header(path):
    with open(path) as fh:
        return parse_header(fh.readline().rstrip("\n"))


# ---------------------------------------------------------------- gyro

def write_gyro_trace(path, samples, rate=0.0, focal=1.0):
    with open(path, "w") as fh:
        fh.write(TraceHeader("gyro", rate, 0, focal).line() + "\n")
        prev = None
        for t, w in samples:
            if prev is not None and not t > prev:
                raise InvalidTraceError(f"gyro timestamps must increase ({t!r} after {prev!r})")
            prev = t
            fh.write(f"t={_fmt(t)} wx={_fmt(w[0])} wy={_fmt(w[1])} wz={_fmt(w[2])}\n")


def read_gyro_trace(path) -> List[GyroSample]:
    _, body = _read_lines(path, "gyro")
    samples = []
    for lineno, line in body:
        f = _fields(line, lineno)
        if set(f) != {"t", "wx", "wy", "wz"}:
            raise ParseError(f"gyro record needs exactly t, wx, wy, wz (got {sorted(f)})", lineno)
        t = _number(f, "t", lineno)
        w = tuple(_number(f, k, lineno) for k in ("wx", "wy", "wz"))
        if not all(math.isfinite(v) for v in (t,) + w):
            raise ParseError("non-finite gyro value", lineno)
        if samples and not t > samples[-1].t:
            raise InvalidTraceError(f"line {lineno}: non-monotonic timestamp {t!r}")
        samples.append(GyroSample(t, w))
    return samples


# ---------------------------------------------------------------- landmarks

def write_landmark_trace(path, records, rate=0.0, focal=1.0):
    n = next((len(r.landmarks) for r in records if r.landmarks is not None), 0)
    with open(path, "w") as fh:
        fh.write(TraceHeader("landmarks", rate, n, focal).line() + "\n")
        prev = None
        for rec in records:
            if prev is not None and not rec.t > prev:
                raise InvalidTraceError(f"landmark timestamps must increase ({rec.t!r} after {prev!r})")
            prev = rec.t
            head = f"frame={int(rec.frame)} t={_fmt(rec.t)}"
            if rec.landmarks is None:
                fh.write(head + " lost=1\n")
                continue
            if len(rec.landmarks) != n:
                raise SchemaError(f"frame {rec.frame}: {len(rec.landmarks)} landmarks, header says {n}")
            pose = ""
            if rec.landmarks.pose_hint is not None:
                pose = " pose=" + ",".join(_fmt(v) for v in rec.landmarks.pose_hint)
            pts = ";".join(f"{_fmt(x)},{_fmt(y)}" for x, y in rec.landmarks.points)
            fh.write(f"{head}{pose} pts={pts}\n")


def read_landmark_trace(path) -> List[LandmarkRecord]:
    header, body = _read_lines(path, "landmarks")
    records = []
    for lineno, line in body:
        f = _fields(line, lineno)
        frame = _number(f, "frame", lineno, int)
        t = _number(f, "t", lineno)
        if records:
            if not t > records[-1].t:
                raise InvalidTraceError(f"line {lineno}: non-monotonic timestamp {t!r}")
            if not frame > records[-1].frame:
                raise InvalidTraceError(f"line {lineno}: non-monotonic frame index {frame}")
        if f.get("lost") == "1":
            if "pts" in f:
                raise ParseError("a lost frame cannot carry points", lineno)
            records.append(LandmarkRecord(frame, t, None))
            continue
        if "pts" not in f:
            raise ParseError("landmark record needs pts= or lost=1", lineno)
        pts = np.array([_floats(p, lineno, 2) for p in f["pts"].split(";")])
        if len(pts) != header.n_landmarks:
            raise SchemaError(f"line {lineno}: {len(pts)} landmarks, header says {header.n_landmarks}")
        if np.any(pts < -0.5) or np.any(pts > 1.5):
            warnings.warn(f"line {lineno}: landmark coordinates outside [-0.5, 1.5]", TraceWarning)
        pose = tuple(_floats(f["pose"], lineno, 3)) if "pose" in f else None
        records.append(LandmarkRecord(frame, t, LandmarkSet(pts, pose)))
    return records


# ---------------------------------------------------------------- results

def _result_fields(frame):
    pose = frame.virtual_pose
    head = frame.head_center_target
    head = (math.nan, math.nan) if head is None else head
    return (frame.frame_index, frame.t, pose.rotation, pose.offset, frame.homography, head,
            frame.protrusion, frame.solver_report.iterations, frame.fallback_used)


def write_results(path, frames, rate=0.0, focal=1.0):
    with open(path, "w") as fh:
        fh.write(TraceHeader("results", rate, 0, focal).line() + "\n")
        for frame in frames:
            if isinstance(frame, ResultRecord):
                idx, t, q, off, h, head, prot, iters, fb = (
                    frame.frame_index, frame.t, frame.rotation, frame.offset, frame.homography,
                    (math.nan, math.nan) if frame.head_center_target is None else frame.head_center_target,
                    frame.protrusion, frame.iterations, frame.fallback_used)
            else:
                idx, t, q, off, h, head, prot, iters, fb = _result_fields(frame)
            fh.write(
                f"frame={int(idx)} t={_fmt(t)} q={','.join(_fmt(v) for v in q)} "
                f"offset={','.join(_fmt(v) for v in off)} "
                f"H={','.join(_fmt(v) for v in np.ravel(h))} "
                f"head={','.join(_fmt(v) for v in head)} protrusion={_fmt(prot)} "
                f"iterations={int(iters)} fallback={int(bool(fb))}\n")


def read_results(path) -> List[ResultRecord]:
    _, body = _read_lines(path, "results")
    out = []
    for lineno, line in body:
        f = _fields(line, lineno)
        for key in ("q", "offset", "H", "head"):
            if key not in f:
                raise ParseError(f"missing field {key!r}", lineno)
        head = np.array(_floats(f["head"], lineno, 2))
        rec = ResultRecord(
            frame_index=_number(f, "frame", lineno, int),
            t=_number(f, "t", lineno),
            rotation=np.array(_floats(f["q"], lineno, 4)),
            offset=np.array(_floats(f["offset"], lineno, 2)),
            homography=np.array(_floats(f["H"], lineno, 9)).reshape(3, 3),
            head_center_target=None if np.all(np.isnan(head)) else head,
            protrusion=_number(f, "protrusion", lineno),
            iterations=_number(f, "iterations", lineno, int),
            fallback_used=_number(f, "fallback", lineno, int) == 1,
        )
        if out and not rec.t > out[-1].t:
            raise InvalidTraceError(f"line {lineno}: non-monotonic timestamp {rec.t!r}")
        out.append(rec)
    return out
