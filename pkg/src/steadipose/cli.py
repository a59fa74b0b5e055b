"""Command-line entry points: simulate, stabilize, evaluate, gradcheck."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import metrics
from .config import StabilizerConfig, load_config
from .exceptions import SteadiposeError
from .gradcheck import gradient_check
from .gyro import integrate, rotation_at
from .objective import TERM_WEIGHTS, ablate
from .pipeline import FrameObservation, init_stream, process_frame
from .scenarios import KINDS, ScenarioSpec, generate_scenario
from .trace_io import (read_gyro_trace, read_header, read_landmark_trace, read_results,
                       write_gyro_trace, write_landmark_trace, write_results)

ABLATABLE = sorted(TERM_WEIGHTS) + ["smoothness"]


def _parser():
    p = argparse.ArgumentParser(prog="steadipose", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic gyro + landmark trace pair")
    s.add_argument("--scenario", required=True, choices=KINDS)
    s.add_argument("--duration", type=float, default=10.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--frame-rate", type=float, default=30.0)
    s.add_argument("--out-prefix", required=True)

    s = sub.add_parser("stabilize", help="stabilize a trace pair")
    s.add_argument("--gyro", required=True)
    s.add_argument("--landmarks", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--ablate", action="append", default=[], choices=ABLATABLE,
                   help="zero one objective term's weight (repeatable)")

    s = sub.add_parser("evaluate", help="write stability metrics as CSV tables")
    s.add_argument("--results", required=True)
    s.add_argument("--landmarks", required=True)
    s.add_argument("--report", required=True, help="output path prefix for the CSV tables")
    s.add_argument("--gyro", help="gyro trace; enables the virtual-real deviation table")

    s = sub.add_parser("gradcheck", help="finite-difference check of the analytic Jacobian")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--frames", type=int, default=100)
    s.add_argument("--tolerance", type=float, default=1e-4)
    return p


def _simulate(args):
    spec = ScenarioSpec(args.scenario, duration=args.duration, frame_rate=args.frame_rate, seed=args.seed)
    sc = generate_scenario(spec)
    gyro_path = f"{args.out_prefix}_gyro.trace"
    lm_path = f"{args.out_prefix}_landmarks.trace"
    write_gyro_trace(gyro_path, sc.gyro, spec.gyro_rate, spec.focal)
    write_landmark_trace(lm_path, sc.landmarks, spec.frame_rate, spec.focal)
    print(gyro_path)
    print(lm_path)
    return 0


def _observations(gyro_path, landmark_path, alignment=None):
    timeline = integrate(read_gyro_trace(gyro_path), alignment)
    records = read_landmark_trace(landmark_path)
    obs = [FrameObservation(r.frame, r.t, rotation_at(timeline, r.t), r.landmarks) for r in records]
    return obs, records


def _stabilize(args):
    header = read_header(args.landmarks)
    config = load_config(args.config) if args.config else StabilizerConfig(focal=header.focal)
    if args.ablate:
        config = replace(config, weights=ablate(config.weights, *args.ablate))
    obs, _ = _observations(args.gyro, args.landmarks, config.gyro_alignment)
    state = init_stream(config)
    frames = [process_frame(state, o) for o in obs]
    write_results(args.out, frames, header.rate, config.focal)
    return 0


def _evaluate(args):
    results = read_results(args.results)
    records = read_landmark_trace(args.landmarks)
    rate = read_header(args.landmarks).rate
    real = None
    if args.gyro:
        timeline = integrate(read_gyro_trace(args.gyro))
        real = [rotation_at(timeline, r.t) for r in results]
    report = metrics.stability_report(results, records, rate, real)
    for path in metrics.write_report(report, args.report):
        print(path)
    print(json.dumps(report.summary(), sort_keys=True))
    return 0


def _gradcheck(args):
    res = gradient_check(args.seed, args.frames)
    ok = res.passed(args.tolerance)
    print(f"{'PASS' if ok else 'FAIL'} frames={res.frames} max_relative_error={res.max_relative_error:.3e} "
          f"worst_frame={res.worst_frame} tolerance={args.tolerance:g}")
    return 0 if ok else 1


COMMANDS = {"simulate": _simulate, "stabilize": _stabilize, "evaluate": _evaluate, "gradcheck": _gradcheck}


def main(argv=None):
    """Run one subcommand; returns 0 on success, 1 on processing errors, 2 on usage errors."""
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return COMMANDS[args.command](args)
    except (SteadiposeError, OSError) as exc:
        print(f"steadipose {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
