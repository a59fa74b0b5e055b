import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from steadipose.exceptions import InvalidArgumentError
from steadipose.geometry import CameraPose, Intrinsics, quat_from_axis_angle
from steadipose.gradcheck import finite_difference_jacobian, jacobian_relative_error, random_frame
from steadipose.objective import (FrameContext, ObjectiveWeights, ablate, residuals,
                                  residuals_and_jacobian, spherical_angle, term_distortion,
                                  term_fitting, term_following, term_protrusion,
                                  term_rotation_smoothness, term_translation_smoothness,
                                  total_energy)
from steadipose.trajectory import LandmarkSet

W = ObjectiveWeights()
I = CameraPose.identity()


def _ctx(landmarks=None, target=None, real=I, prev1=I, prev2=I, shrink=0.01):
    lms = None if landmarks is None else LandmarkSet(landmarks)
    return FrameContext(real, lms, target, prev1, prev2, boundary_shrink=shrink)


def test_fitting_examples():
    assert term_fitting(I, _ctx([[0.5, 0.5]] * 3, [0.5, 0.5])) == 0.0
    assert term_fitting(I, _ctx([[0.6, 0.5]], [0.5, 0.5])) == pytest.approx(0.01, abs=1e-15)


def test_fitting_matches_loop_oracle(rng):
    for _ in range(5):
        pv, ctx = random_frame(rng)
        assert term_fitting(pv, ctx) == pytest.approx(oracles.fitting(pv, ctx), rel=1e-11)


def test_fitting_scales_with_duplication(rng):
    pv, ctx = random_frame(rng, n_landmarks=20)
    doubled = FrameContext(ctx.real_pose, LandmarkSet(np.vstack([ctx.landmarks.points] * 2)),
                           ctx.target_H, ctx.prev_virtual, ctx.prev_prev_virtual)
    assert term_fitting(pv, doubled) == pytest.approx(2 * term_fitting(pv, ctx), rel=1e-12)


def test_distortion_examples():
    q = quat_from_axis_angle([0, 1, 0], 0.3)
    assert term_distortion(q, q, W) == 0.0
    small = 0.01
    assert term_distortion(quat_from_axis_angle([0, 0, 1], small), I.rotation, W) < (0.01 * small) ** 2
    big = 2 * W.logistic_theta
    val = term_distortion(quat_from_axis_angle([0, 0, 1], big), I.rotation, W)
    assert val == pytest.approx(big ** 2, rel=0.05)


def test_spherical_angle_is_hemisphere_safe():
    q = quat_from_axis_angle([1, 0, 0], 0.4)
    assert spherical_angle(q, -q) == pytest.approx(0.0, abs=1e-7)
    assert spherical_angle(q, I.rotation) == pytest.approx(0.4, abs=1e-12)


def test_following_examples():
    q = quat_from_axis_angle([0, 0, 1], 0.2)
    assert term_following(q, q) == 0.0
    assert term_following(-q, q) == 0.0
    d = 0.05
    expected = math.sin(d / 2) ** 2 + (1 - math.cos(d / 2)) ** 2
    assert term_following(quat_from_axis_angle([0, 0, 1], d), I.rotation) == pytest.approx(expected, rel=1e-12)


def test_rotation_smoothness_examples(rng):
    q = quat_from_axis_angle([1, 1, 0], 0.3)
    assert term_rotation_smoothness(q, q, q, W) == 0.0
    step = quat_from_axis_angle([0, 0, 1], 0.02)
    r2 = I.rotation
    r1 = step
    r0 = quat_from_axis_angle([0, 0, 1], 0.04)
    expected = W.w_r_c0 * np.sum((step - I.rotation) ** 2)
    assert term_rotation_smoothness(r0, r1, r2, W) == pytest.approx(expected, rel=1e-9)
    from conftest import random_quat
    for _ in range(10):
        a, b, c = (random_quat(rng) for _ in range(3))
        assert term_rotation_smoothness(a, b, c, W) == pytest.approx(
            oracles.rotation_smoothness(a, b, c, W.w_r_c0, W.w_r_c1), rel=1e-10)


def test_translation_smoothness_examples(rng):
    t = np.array([0.02, -0.01])
    assert term_translation_smoothness(t, t, t, W) == 0.0
    val = term_translation_smoothness([0.02, 0], [0.01, 0], [0, 0], W)
    assert val == pytest.approx(W.w_t_c0 * 1e-4, rel=1e-12)
    for _ in range(10):
        a, b, c = rng.uniform(-0.1, 0.1, (3, 2))
        assert term_translation_smoothness(a, b, c, W) == pytest.approx(
            oracles.translation_smoothness(a, b, c, W.w_t_c0, W.w_t_c1), rel=1e-12)


def test_protrusion_examples():
    ctx = _ctx(shrink=0.0)
    assert term_protrusion(I, ctx, W) == 0.0
    ctx = _ctx()
    contact = CameraPose(offset=(0.15 - 0.01, 0.0))
    assert term_protrusion(contact, ctx, W) == pytest.approx(0.0, abs=1e-20)
    beyond = CameraPose(offset=(0.15 - 0.01 + 0.02, 0.0))
    assert oracles.protrusion(beyond, I) == pytest.approx(0.02, abs=1e-12)
    assert term_protrusion(beyond, ctx, W) == pytest.approx(1.0, abs=1e-9)


def test_total_energy_examples(rng):
    assert total_energy(I, _ctx([[0.5, 0.5]], [0.5, 0.5]), W) == pytest.approx(0.0, abs=1e-20)
    pv, ctx = random_frame(rng)
    zero = ablate(W, "fitting", "distortion", "following", "smoothness", "protrusion")
    assert total_energy(pv, ctx, zero) == 0.0


def test_total_energy_matches_term_oracle(rng):
    for _ in range(20):
        pv, ctx = random_frame(rng)
        ref = oracles.total_energy(pv, ctx, W)
        assert total_energy(pv, ctx, W) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_residuals_zero_at_zero_energy_pose():
    r, j = residuals_and_jacobian(I, _ctx([[0.5, 0.5]] * 4, [0.5, 0.5]), ablate(W, "protrusion"))
    assert not np.any(r)
    assert j.shape == (len(r), 5)


def test_residual_norm_equals_total_energy(rng):
    for _ in range(50):
        pv, ctx = random_frame(rng)
        r = residuals(pv, ctx, W)
        e = total_energy(pv, ctx, W)
        assert abs(r @ r - e) <= 1e-10 * max(1.0, e)


def test_jacobian_matches_finite_differences(rng):
    for _ in range(20):
        pv, ctx = random_frame(rng)
        _, ja = residuals_and_jacobian(pv, ctx, W)
        assert jacobian_relative_error(ja, finite_difference_jacobian(pv, ctx, W)) < 1e-4


def test_jacobian_at_nonunit_focal(rng):
    pv, ctx = random_frame(rng, n_landmarks=30, focal=0.8)
    _, ja = residuals_and_jacobian(pv, ctx, W)
    assert jacobian_relative_error(ja, finite_difference_jacobian(pv, ctx, W)) < 1e-4


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.booleans(), min_size=4, max_size=4))
def test_energy_sign_flip_invariant(seed, flips):
    pv, ctx = random_frame(np.random.default_rng(seed), n_landmarks=10)
    base = total_energy(pv, ctx, W)
    s = [-1.0 if f else 1.0 for f in flips]
    # CameraPose canonicalizes, so flip the raw arrays through the term functions too
    flipped = FrameContext(CameraPose(s[0] * ctx.real_pose.rotation), ctx.landmarks, ctx.target_H,
                           CameraPose(s[1] * ctx.prev_virtual.rotation, ctx.prev_virtual.offset),
                           CameraPose(s[2] * ctx.prev_prev_virtual.rotation, ctx.prev_prev_virtual.offset))
    assert total_energy(CameraPose(s[3] * pv.rotation, pv.offset), flipped, W) == pytest.approx(base, rel=1e-12)
    a, b, c = pv.rotation, ctx.prev_virtual.rotation, ctx.prev_prev_virtual.rotation
    assert term_rotation_smoothness(s[0] * a, s[1] * b, s[2] * c, W) == pytest.approx(
        term_rotation_smoothness(a, b, c, W), rel=1e-12, abs=1e-15)
    assert term_distortion(s[0] * a, s[1] * ctx.real_pose.rotation, W) == pytest.approx(
        term_distortion(a, ctx.real_pose.rotation, W), rel=1e-12, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_terms_non_negative(seed):
    pv, ctx = random_frame(np.random.default_rng(seed), n_landmarks=10)
    rv, rr = pv.rotation, ctx.real_pose.rotation
    values = [term_fitting(pv, ctx), term_distortion(rv, rr, W), term_following(rv, rr),
              term_rotation_smoothness(rv, rr, ctx.prev_virtual.rotation, W),
              term_translation_smoothness(pv.offset, ctx.prev_virtual.offset, [0, 0], W),
              term_protrusion(pv, ctx, W), term_protrusion(pv, ctx, W, smooth=True)]
    assert all(v >= 0 for v in values)


def test_fitting_rows_skipped_without_face(rng):
    pv, ctx = random_frame(rng, n_landmarks=10)
    bare = FrameContext(ctx.real_pose, None, None, ctx.prev_virtual, ctx.prev_prev_virtual)
    assert len(residuals(pv, ctx, W)) == len(residuals(pv, bare, W)) + 20


def test_weights_validation():
    with pytest.raises(InvalidArgumentError):
        ObjectiveWeights(w_f=-1.0)
    with pytest.raises(InvalidArgumentError):
        ObjectiveWeights(alpha=0.0)
    with pytest.raises(InvalidArgumentError):
        ablate(W, "nonsense")


def test_ablate_smoothness_zeroes_all_four():
    w = ablate(W, "smoothness")
    assert (w.w_r_c0, w.w_r_c1, w.w_t_c0, w.w_t_c1) == (0, 0, 0, 0)
    assert w.w_f == W.w_f


def test_context_rejects_bad_crop():
    with pytest.raises(InvalidArgumentError):
        FrameContext(I, None, None, I, I, Intrinsics(), Intrinsics(), crop_ratio=0.5)
