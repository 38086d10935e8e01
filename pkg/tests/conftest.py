import numpy as np
import pytest

from foldy_imaging.geometry import ArrayGeometry, ImageWindow, build_sensing_matrix

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ref_geometry():
    return ArrayGeometry.linear(100, 1.0)


@pytest.fixture(scope="session")
def ref_window():
    return ImageWindow((0.0, 100.0, 0.0), (41.0, 41.0), 1.0)


@pytest.fixture(scope="session")
def ref_sensing(ref_geometry, ref_window):
    return build_sensing_matrix(ref_geometry, ref_window, normalize=True)


@pytest.fixture
def small_setup():
    """A 24-sensor array and an 11 x 11 window: cheap but non-trivial."""
    geom = ArrayGeometry.linear(24, 1.0)
    iw = ImageWindow((0.0, 30.0, 0.0), (11.0, 11.0), 1.0)
    return geom, iw


def random_unit_matrix(rng, n, k):
    G = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    return G / np.linalg.norm(G, axis=0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
