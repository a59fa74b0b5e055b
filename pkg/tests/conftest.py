import numpy as np
import pytest
from hypothesis import strategies as st

from steadipose.geometry import quat_exp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_quat(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    return quat_exp(axis / np.linalg.norm(axis) * rng.uniform(0.0, max_angle))


def rodrigues(axis, angle):
    """Rotation matrix from axis-angle, written out independently of the quaternion code."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * kx @ kx


unit_quats = st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.array(v) / np.linalg.norm(v))


# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail):
    ACCEPTANCE[number] = (title, bool(passed), detail)
    assert passed, detail


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {number:>2}. {title}: {detail}")
