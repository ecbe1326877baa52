import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_square_contour():
    from sdfmesh.sdf import Contour
    # clockwise: up the left side, along the top, down the right, back along the bottom
    return Contour.from_polygon([(0, 0), (0, 1), (1, 1), (1, 0)], box=(-0.5, 1.5, -0.5, 1.5))


# one line per acceptance criterion, printed after the run
CRITERIA = {}


def report_criterion(number, ok, detail=""):
    CRITERIA[number] = (bool(ok), detail)
    print(f"Criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"Criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
