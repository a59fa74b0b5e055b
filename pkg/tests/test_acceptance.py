"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line in the terminal summary."""
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import record_acceptance
from steadipose import ScenarioSpec, StabilizerConfig, generate_scenario, pipeline, process_stream
from steadipose.gradcheck import gradient_check, random_frame
from steadipose.geometry import quat_angle
from steadipose.metrics import (dft, first_difference_norms, deviation_series, head_band_power, naive_dft,
                                power_spectrum)
from steadipose.objective import ObjectiveWeights, ablate, total_energy
from steadipose.protrusion import ProtrusionConfig, binary_search_path, path_pose, protrude
from steadipose.solver import SolverSettings, solve
from steadipose.trajectory import TrajectoryParams, smooth_head_center

BOUNDS = json.loads((Path(__file__).parent / "fixtures" / "ablation_bounds.json").read_text())
FRAME_RATE = 30.0


@pytest.fixture(scope="module")
def walk():
    spec = BOUNDS["walk"]
    return generate_scenario(ScenarioSpec("walk", duration=spec["duration"], seed=spec["seed"]))


@pytest.fixture(scope="module")
def walk_runs(walk):
    cfg = StabilizerConfig()
    obs = walk.observations()
    return {
        "full": process_stream(obs, cfg),
        "no_fitting": process_stream(obs, replace(cfg, weights=ablate(cfg.weights, "fitting"))),
        "no_smoothness": process_stream(obs, replace(cfg, weights=ablate(cfg.weights, "smoothness"))),
    }


def test_criterion_01_static_scene():
    sc = generate_scenario(ScenarioSpec("static", duration=2.0, seed=0))
    obs = sc.observations()
    t0 = time.perf_counter()
    frames = process_stream(obs)
    elapsed = time.perf_counter() - t0
    angle = max(quat_angle(f.virtual_pose.rotation, np.array([1.0, 0, 0, 0])) for f in frames)
    offset = max(np.max(np.abs(f.virtual_pose.offset)) for f in frames)
    hom = max(np.max(np.abs(f.homography - np.eye(3))) for f in frames)
    prot = max(f.protrusion for f in frames)
    ok = len(frames) >= 60 and angle <= 1e-6 and offset <= 1e-6 and hom <= 1e-9 and prot == 0 and elapsed < 1.0
    record_acceptance(1, "static scene", ok,
                      f"{len(frames)} frames, angle {angle:.1e}, offset {offset:.1e}, "
                      f"homography {hom:.1e}, protrusion {prot}, {elapsed:.3f}s")


def test_criterion_02_gradient():
    res = gradient_check(seed=0, n_frames=100)
    record_acceptance(2, "gradient correctness", res.passed(1e-4),
                      f"{res.frames} frames, max relative error {res.max_relative_error:.2e} (< 1e-4)")


@pytest.mark.slow
def test_criterion_03_solver_vs_grid():
    w = ObjectiveWeights()
    rng = np.random.default_rng(2024)
    # the iteration budget is lifted so the comparison measures the optimum LM reaches
    settings = SolverSettings(max_iterations=200)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        pv, ctx = random_frame(rng, n_landmarks=8)
        pose, _ = solve(pv, ctx, w, settings)
        grid_min, _ = oracles.grid_search(ctx, w, pv)
        worst = max(worst, total_energy(pose, ctx, w) / grid_min)
    elapsed = time.perf_counter() - t0
    record_acceptance(3, "solver optimality", worst <= 1.01 and elapsed < 300,
                      f"worst LM/grid energy ratio {worst:.4f} (<= 1.01), {elapsed:.0f}s")


def test_criterion_04_fitting_ablation(walk, walk_runs):
    full = head_band_power(walk_runs["full"], walk.landmarks, FRAME_RATE)
    gyro_only = head_band_power(walk_runs["no_fitting"], walk.landmarks, FRAME_RATE)
    ratio = full / gyro_only
    bound = BOUNDS["walk"]["band_ratio_fitting_max"]
    record_acceptance(4, "fitting ablation", ratio <= bound,
                      f"band power {full:.4g} vs gyro-only {gyro_only:.4g}, ratio {ratio:.3f} (<= {bound})")


def test_criterion_05_pan_ablation():
    sc = generate_scenario(ScenarioSpec("pan", duration=10.0, seed=3))
    obs = sc.observations()
    cfg = StabilizerConfig()
    real = sc.truth["real_rotations"]
    dev_on = deviation_series(process_stream(obs, cfg), real)
    dev_off = deviation_series(process_stream(obs, replace(cfg, weights=ablate(cfg.weights, "following",
                                                                              "distortion"))), real)
    frac = float(np.mean(dev_on > 3 * cfg.weights.logistic_theta))
    ok = dev_on.max() < dev_off.max() and frac <= 0.05
    record_acceptance(5, "pan ablation", ok,
                      f"max deviation {dev_on.max():.4f} vs {dev_off.max():.4f} ablated, "
                      f"{frac:.1%} of frames beyond 3 theta (<= 5%)")


def test_criterion_06_smoothness_ablation(walk, walk_runs):
    rot_on, off_on = first_difference_norms(walk_runs["full"])
    rot_off, off_off = first_difference_norms(walk_runs["no_smoothness"])
    rot_cut = 1 - rot_on.mean() / rot_off.mean()
    off_cut = 1 - off_on.mean() / off_off.mean()
    band = (head_band_power(walk_runs["full"], walk.landmarks, FRAME_RATE)
            / head_band_power(walk_runs["no_smoothness"], walk.landmarks, FRAME_RATE))
    need = BOUNDS["walk"]["step_reduction_min"]
    cap = BOUNDS["walk"]["band_ratio_smoothness_max"]
    ok = rot_cut >= need and off_cut >= need and band <= cap
    record_acceptance(6, "smoothness ablation", ok,
                      f"rotation step -{rot_cut:.0%}, offset step -{off_cut:.0%} (>= {need:.0%}), "
                      f"band power x{band:.2f} (<= {cap})")


def _violating_poses(rng, count, cfg):
    from conftest import random_quat
    from steadipose import CameraPose, Intrinsics
    k = Intrinsics(1.0)
    out = []
    while len(out) < count:
        pr = CameraPose(random_quat(rng, 0.3))
        pv = CameraPose(random_quat(rng, 0.3), rng.uniform(-0.25, 0.25, 2))
        if protrude(pv, pr, k, k, cfg) > cfg.tolerance and protrude(pr, pr, k, k, cfg) <= cfg.tolerance:
            out.append((pv, pr))
    return out


def test_criterion_07_protrusion_safety(monkeypatch):
    searched = []
    original = pipeline.binary_search_pose

    def spy(pv, pr, ctx, cfg):
        searched.append((pv, pr, ctx, cfg))
        return original(pv, pr, ctx, cfg)

    monkeypatch.setattr(pipeline, "binary_search_pose", spy)
    spec = ScenarioSpec("pan", duration=10.0, seed=9, pan_rate=5.0, shake_amplitude=15.0, shake_noise=5.0)
    frames = process_stream(generate_scenario(spec).observations())
    safe = sum(f.protrusion <= 1e-4 or f.fallback_used for f in frames)

    cfg = ProtrusionConfig()
    cases = [(pv, pr, ctx.intr_v, ctx.intr_r, c) for pv, pr, ctx, c in searched]
    from steadipose import Intrinsics
    cases += [(pv, pr, Intrinsics(1.0), Intrinsics(1.0), cfg)
              for pv, pr in _violating_poses(np.random.default_rng(7), 20, cfg)]
    worst = 0.0
    for pv, pr, iv, ir, c in cases:
        s = binary_search_path(pv, pr, iv, ir, c)
        ref = oracles.linear_scan_min_s(pv, pr, c.tolerance, crop=c.crop_ratio, shrink=c.boundary_shrink,
                                        fv=iv.focal, fr=ir.focal)
        if s is None or ref is None:
            worst = np.inf if (s is None) != (ref is None) else worst
            continue
        worst = max(worst, abs(s - ref))
        assert protrude(path_pose(pv, pr, s), pr, iv, ir, c) <= c.tolerance
    ok = safe == len(frames) and worst <= 2.0 ** -16
    record_acceptance(7, "protrusion safety", ok,
                      f"{safe}/{len(frames)} frames safe, {len(searched)} in-stream searches, "
                      f"{len(cases)} searches vs linear scan, max |ds| {worst:.2e} (<= {2.0 ** -16:.2e})")


def _same(a, b):
    return (np.array_equal(a.virtual_pose.rotation, b.virtual_pose.rotation)
            and np.array_equal(a.virtual_pose.offset, b.virtual_pose.offset)
            and np.array_equal(a.homography, b.homography)
            and np.array_equal(a.warp_mesh, b.warp_mesh))


def test_criterion_08_causality_determinism(walk):
    obs = walk.observations()[:300]
    full = process_stream(obs)
    rerun = process_stream(obs)
    rng = np.random.default_rng(8)
    prefixes = rng.choice(np.arange(1, len(obs)), size=20, replace=False)
    truncation_ok = all(all(_same(a, b) for a, b in zip(process_stream(obs[:k]), full[:k])) for k in prefixes)
    rerun_ok = all(_same(a, b) for a, b in zip(full, rerun))
    record_acceptance(8, "causality and determinism", truncation_ok and rerun_ok and len(obs) == 300,
                      f"20 prefixes of {len(obs)} frames equal: {truncation_ok}, rerun bit-identical: {rerun_ok}")


def test_criterion_09_head_trajectory():
    rng = np.random.default_rng(9)
    worst, violations = 0.0, 0
    for _ in range(50):
        params = TrajectoryParams(w1=rng.uniform(0, 10000), w2=rng.uniform(0.1, 10))
        center = rng.uniform(0.2, 0.8, 2)
        prev = center + rng.uniform(-0.3, 0.3, 2)
        h = smooth_head_center(prev, center, params)
        ref, _ = oracles.head_grid_search(prev, center, params)
        worst = max(worst, float(np.max(np.abs(h - ref))))
        violations += not np.max(np.abs(h - center)) < params.crop_ratio_r
    record_acceptance(9, "head trajectory", worst <= 2e-3 and violations == 0,
                      f"max distance to grid optimum {worst:.1e} (<= 2e-3), {violations} constraint violations")


def test_criterion_10_convergence_budget(walk, walk_runs):
    median = float(np.median([f.solver_report.accepted for f in walk_runs["full"]]))
    n_landmarks = next(len(r.landmarks) for r in walk.landmarks if r.landmarks is not None)
    obs = walk.observations()
    per_frame = []
    for _ in range(3):
        t0 = time.perf_counter()
        process_stream(obs)
        per_frame.append((time.perf_counter() - t0) / len(obs))
    ms = min(per_frame) * 1e3
    record_acceptance(10, "convergence budget", median <= 5 and ms < 5 and n_landmarks == 133,
                      f"median accepted iterations {median:g} (<= 5), {ms:.2f} ms/frame at "
                      f"{n_landmarks} landmarks (< 5 ms)")


def test_criterion_11_spectrum():
    rng = np.random.default_rng(11)
    worst_dft, worst_parseval = 0.0, 0.0
    for n in (8, 30, 64, 100, 256, 300, 1000):
        x = rng.normal(size=n)
        ref = naive_dft(x)
        worst_dft = max(worst_dft, float(np.max(np.abs(dft(x) - ref)) / np.max(np.abs(ref))))
        _, p = power_spectrum(x, FRAME_RATE)
        energy = float(np.sum((x - x.mean()) ** 2))
        worst_parseval = max(worst_parseval, abs(p.sum() - energy) / energy)
    ok = worst_dft <= 1e-9 and worst_parseval <= 1e-6
    record_acceptance(11, "spectrum correctness", ok,
                      f"DFT relative error {worst_dft:.1e} (<= 1e-9), Parseval {worst_parseval:.1e} (<= 1e-6)")
