import numpy as np
import pytest

from occtrack.geometry import BBox

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_box(rng, lo=-50.0, hi=50.0, max_size=40.0):
    x, y = rng.uniform(lo, hi, 2)
    w, h = rng.uniform(0.5, max_size, 2)
    return BBox(float(x), float(y), float(w), float(h))


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)
