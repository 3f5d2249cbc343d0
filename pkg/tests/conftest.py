import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from stereo_ot.geometry import StereoRig


def random_intrinsics(rng):
    k = np.eye(3)
    k[0, 0], k[1, 1] = rng.uniform(0.5, 2.0, size=2)
    k[0, 1] = rng.uniform(-0.05, 0.05)
    k[:2, 2] = rng.uniform(-0.3, 0.3, size=2)
    return k


def random_rig(rng, max_deg=20.0):
    rot = Rotation.from_rotvec(np.deg2rad(max_deg) * rng.uniform(-1, 1, size=3) / np.sqrt(3)).as_matrix()
    center = np.array([1.0, 0.0, 0.0]) + rng.uniform(-0.3, 0.3, size=3)
    return StereoRig(random_intrinsics(rng), random_intrinsics(rng), rot, -rot @ center)


def points_in_front(rig, rng, n):
    """Points at depth 2-6 in front of both cameras, in the left frame."""
    out = []
    while len(out) < n:
        w = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(2, 6)])
        if (rig.rotation @ w + rig.translation)[2] > 0.5:
            out.append(w)
    return np.array(out)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_rig():
    """Identity intrinsics, identity rotation, cameras at (0,0,0) and (1,0,0)."""
    return StereoRig.rectified(1.0)


# Lines recorded by the acceptance suite, echoed after the test run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
