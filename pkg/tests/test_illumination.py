import numpy as np
import pytest

from foldy_imaging.forward import ScattererScene, response_matrix
from foldy_imaging.geometry import ArrayGeometry, ImageWindow
from foldy_imaging.illumination import (
    DataMatrix,
    Illumination,
    build_data_matrix,
    measure_response_matrix,
    optimal_illuminations,
    point_illumination,
    random_illuminations,
    write_illuminations_csv,
)


@pytest.fixture(scope="module")
def response():
    geom = ArrayGeometry.linear(16, 1.0)
    iw = ImageWindow((0.0, 20.0, 0.0), (9.0, 9.0), 1.0)
    scene = ScattererScene.with_random_phases(iw, [10, 40, 70], [3.0, 2.0, 1.0], 0, scale=4 * np.pi)
    return response_matrix(scene, geom)


def test_point_illumination_is_unit_vector():
    il = point_illumination(0, 3)
    assert np.array_equal(il.f, [1, 0, 0])
    assert il.label == "point:0"
    with pytest.raises(IndexError):
        point_illumination(3, 3)


def test_non_unit_vector_rejected():
    with pytest.raises(ValueError, match="unit-norm"):
        Illumination(np.array([1.0, 1.0]), "bad")


def test_random_illuminations_are_distinct_and_seeded():
    a = random_illuminations(5, 20, rng=3)
    b = random_illuminations(5, 20, rng=3)
    assert [il.label for il in a] == [il.label for il in b]
    assert len({il.label for il in a}) == 5
    with pytest.raises(ValueError):
        random_illuminations(21, 20)


def test_optimal_illuminations_maximize_data_power(response):
    s = response.singular_values
    for j, il in enumerate(optimal_illuminations(response, 3)):
        assert np.linalg.norm(response.P @ il.f) == pytest.approx(s[j], rel=1e-12)
    best_point = max(np.linalg.norm(response.P[:, k]) for k in range(response.N))
    assert s[0] >= best_point


def test_optimal_count_checked(response):
    with pytest.raises(ValueError):
        optimal_illuminations(response, 0)
    with pytest.raises(ValueError):
        optimal_illuminations(response, response.N + 1)


def test_build_data_matrix_noise_energy(response):
    ils = optimal_illuminations(response, 3)
    clean = build_data_matrix(response, ils)
    assert clean.noise_energy == 0.0 and clean.nu == 3
    noisy = build_data_matrix(response, ils, 10.0, rng=2)
    assert noisy.noise_energy == pytest.approx(np.linalg.norm(noisy.B - clean.B), rel=1e-12)
    # noise is 10% of every column, hence 10% overall
    assert noisy.noise_energy == pytest.approx(0.1 * np.linalg.norm(clean.B), rel=1e-12)


def test_data_matrix_column_check():
    with pytest.raises(ValueError, match="one illumination per data column"):
        DataMatrix(np.zeros((3, 2)), (point_illumination(0, 3),))


def test_measured_response_matrix(response):
    meas = measure_response_matrix(response, 5.0, rng=0)
    for k in range(response.N):
        col, ref = meas.P[:, k], response.P[:, k]
        assert np.linalg.norm(col - ref) == pytest.approx(0.05 * np.linalg.norm(ref), rel=1e-12)
    assert measure_response_matrix(response, 0.0).P.tobytes() == response.P.tobytes()


def test_csv_long_format(tmp_path):
    write_illuminations_csv([point_illumination(1, 3)], tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "label,transducer,re_f,im_f"
    assert len(lines) == 4 and lines[2].startswith("point:1,1,1.0,")
