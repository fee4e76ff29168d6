import numpy as np
import pytest

from gmmmap import _accel
from gmmmap.core import CameraIntrinsics, Gaussian3, Kind
from gmmmap.ingest import box_room, orbit_poses, render_sequence


@pytest.fixture(scope="session")
def intr160():
    return CameraIntrinsics.default(160, 120)


@pytest.fixture(scope="session")
def room_frames(intr160):
    scene = box_room()
    return render_sequence(scene, orbit_poses(scene, 20), intr160)


@pytest.fixture(params=_accel.available_backends())
def backend(request):
    return _accel.get_backend(request.param)


def random_gaussian(rng, kind=None, spread=5.0, scale=0.3):
    a = rng.normal(size=(3, 3)) * scale
    cov = a @ a.T + 1e-3 * np.eye(3)
    k = Kind(int(rng.integers(2))) if kind is None else kind
    return Gaussian3(k, float(rng.uniform(0.5, 50.0)), rng.uniform(-spread, spread, 3), cov)


# -- acceptance reporting ---------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
