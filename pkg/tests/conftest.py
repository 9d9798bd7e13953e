import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from gripmap.gggv import GggvModel  # noqa: E402
from gripmap.grid import read_gripmap  # noqa: E402
from gripmap.raceline import raceline_from_csv  # noqa: E402
from gripmap.scenarios import bundled  # noqa: E402
from gripmap.track import TrackGeometry, load_track  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


# -- acceptance summary: one line per criterion -----------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA[mark.args[0]] = (rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


# -- shared geometry ----------------------------------------------------------------------


def circle_points(radius, count, ccw=True):
    a = np.arange(count) * 2 * math.pi / count
    y = radius * np.sin(a)
    return radius * np.cos(a), (y if ccw else -y)


@pytest.fixture(scope="session")
def circle50():
    x, y = circle_points(50.0, 360)
    return TrackGeometry.from_centerline(x, y, -5.0, 5.0, closed=True)


@pytest.fixture(scope="session")
def circle100():
    x, y = circle_points(100.0, 720)
    return TrackGeometry.from_centerline(x, y, -5.0, 5.0, closed=True)


@pytest.fixture(scope="session")
def straight100():
    x = np.arange(0.0, 100.0 + 1e-9, 0.5)
    return TrackGeometry.from_centerline(x, np.zeros_like(x), -5.0, 5.0, closed=False)


@pytest.fixture(scope="session")
def circuit():
    return load_track(bundled("tracks", "circuit.csv"))


@pytest.fixture(scope="session")
def circuit_model():
    return GggvModel.constant(12.0, 12.0, v_max=80.0)


@pytest.fixture(scope="session")
def circuit_grid(circuit):
    return read_gripmap(bundled("maps", "circuit.gmap"), closed=True)


@pytest.fixture(scope="session")
def circuit_raceline(circuit):
    return raceline_from_csv(circuit, bundled("racelines", "circuit.csv"))
