import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import camera_basis_ray
from panobench.errors import DataError, DomainError
from panobench.geometry import (
    ErpImage,
    SphericalPoint,
    angular_distance,
    erp_to_sphere,
    lonlat_to_unit,
    sample_bilinear,
    sample_bilinear_grid,
    sphere_to_erp,
    unit_to_lonlat,
    viewport_ray,
    wrap_lon,
)


def test_erp_to_sphere_examples():
    p = erp_to_sphere(512, 256, 1024, 512)
    assert p.lon == 0.0 and p.lat == 0.0
    p = erp_to_sphere(0, 0, 1024, 512)
    assert p.lon == pytest.approx(-math.pi) and p.lat == pytest.approx(math.pi / 2)


def test_erp_to_sphere_rejects_outside():
    with pytest.raises(DomainError):
        erp_to_sphere(1025, 10, 1024, 512)
    with pytest.raises(DomainError):
        erp_to_sphere(10, -0.1, 1024, 512)


def test_seam_wraps_to_minus_pi():
    assert erp_to_sphere(1024, 100, 1024, 512).lon == pytest.approx(-math.pi)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1023.999), st.floats(0, 512))
def test_erp_round_trip(u, v):
    p = erp_to_sphere(u, v, 1024, 512)
    u2, v2 = sphere_to_erp(p, 1024, 512)
    assert abs(u2 - u) < 1e-9 and abs(v2 - v) < 1e-9


def test_unit_vector_convention():
    assert np.allclose(lonlat_to_unit(0.0, 0.0), [0, 0, 1])
    assert np.allclose(lonlat_to_unit(math.pi / 2, 0.0), [1, 0, 0])
    assert np.allclose(lonlat_to_unit(0.0, math.pi / 2), [0, 1, 0])
    lon, lat = unit_to_lonlat(lonlat_to_unit(1.0, -0.3))
    assert float(lon) == pytest.approx(1.0) and float(lat) == pytest.approx(-0.3)


def test_viewport_center_ray_hits_center():
    c = SphericalPoint(0.7, 0.2)
    p = viewport_ray(111.5 - 0.5, 111.5 - 0.5, 223, 223, math.pi / 3, c)
    assert angular_distance(p.lon, p.lat, c.lon, c.lat) < 1e-12


def test_viewport_edge_ray_at_half_fov():
    # the left edge of pixel 0 sits exactly fov/2 from the axis
    c = SphericalPoint(0.0, 0.0)
    p = viewport_ray(-0.5, 0.0, 224, 1, math.pi / 3, c)
    assert p.lon == pytest.approx(-math.pi / 6, abs=1e-12)


def test_viewport_ray_rejects_bad_fov():
    with pytest.raises(DomainError):
        viewport_ray(0, 0, 8, 8, math.pi, SphericalPoint(0, 0))
    with pytest.raises(DomainError):
        viewport_ray(0, 0, 8, 8, 0.0, SphericalPoint(0, 0))


def test_viewport_ray_matches_rotation_oracle(rng):
    worst = 0.0
    for _ in range(256):
        lon = rng.uniform(-math.pi, math.pi)
        lat = rng.uniform(-1.4, 1.4)
        fov = rng.uniform(0.2, 2.5)
        w, h = int(rng.integers(8, 400)), int(rng.integers(8, 400))
        i, j = rng.uniform(0, w - 1), rng.uniform(0, h - 1)
        got = viewport_ray(i, j, w, h, fov, SphericalPoint(lon, lat))
        olon, olat = camera_basis_ray(i, j, w, h, fov, lon, lat)
        worst = max(worst, float(angular_distance(got.lon, got.lat, olon, olat)))
    assert worst < 1e-9


def test_spherical_point_wraps_and_validates():
    assert SphericalPoint(3 * math.pi, 0).lon == pytest.approx(-math.pi)
    with pytest.raises(DomainError):
        SphericalPoint(0, 2.0)


def test_wrap_lon_range():
    x = np.linspace(-20, 20, 1001)
    w = wrap_lon(x)
    assert np.all(w >= -math.pi) and np.all(w < math.pi)
    assert np.allclose(np.cos(w), np.cos(x)) and np.allclose(np.sin(w), np.sin(x))


def test_erp_image_validation():
    with pytest.raises(DataError):
        ErpImage(np.zeros((10, 30, 3), np.uint8))
    with pytest.raises(DataError):
        ErpImage(np.zeros((16, 32, 3), np.float32))
    with pytest.raises(DataError):
        ErpImage(np.zeros((4, 8, 3), np.uint8))
    ErpImage(np.zeros((10, 30, 3), np.uint8), allow_any_aspect=True)


def test_bilinear_at_texel_centers_is_exact(rng):
    data = rng.integers(0, 256, (8, 16, 3), dtype=np.uint8)
    img = ErpImage(data)
    for v in range(8):
        for u in range(16):
            assert np.array_equal(sample_bilinear(img, u + 0.5, v + 0.5), data[v, u].astype(float))


def test_bilinear_wraps_columns_and_clamps_rows():
    data = np.zeros((8, 16, 3))
    data[:, 0] = 100.0
    data[:, 15] = 50.0
    # halfway between the last and first column across the seam
    assert sample_bilinear_grid(data, np.array([0.0]), np.array([4.5]))[0, 0] == pytest.approx(75.0)
    data = np.zeros((8, 16, 3))
    data[0] = 10.0
    assert sample_bilinear_grid(data, np.array([3.5]), np.array([0.0]))[0, 0] == pytest.approx(10.0)


def test_bilinear_is_linear_between_centers():
    data = np.zeros((8, 16, 3))
    data[:, 3] = 0.0
    data[:, 4] = 8.0
    out = sample_bilinear_grid(data, np.array([3.5 + 0.25]), np.array([2.5]))
    assert out[0, 1] == pytest.approx(2.0)
