"""Camera models: ray maps, undistortion, tabulated rays."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nint.camera import BrownConradyPinhole, IdealPinhole, TabulatedRays
from nint.errors import DimensionMismatch, NonConvergentUndistortion, OutOfBounds


def test_pinhole_principal_point_ray_is_axial():
    cam = IdealPinhole(fx=600.0, fy=600.0, cx=32.0, cy=24.0)
    rays = cam.ray_map(64, 48)
    assert rays.shape == (48, 64, 3)
    np.testing.assert_allclose(rays[24, 32], [0.0, 0.0, 1.0], atol=0)


def test_pinhole_ray_components():
    cam = IdealPinhole(fx=600.0, fy=300.0, cx=32.0, cy=24.0)
    rays = cam.ray_map(64, 48)
    # tau = ((u - cx)/fx, (v - cy)/fy, 1) at every pixel center
    np.testing.assert_allclose(rays[24, 44, 0], 12.0 / 600.0, rtol=0, atol=1e-15)
    np.testing.assert_allclose(rays[30, 32, 1], 6.0 / 300.0, rtol=0, atol=1e-15)
    assert np.all(rays[..., 2] == 1.0)


def test_pinhole_rejects_bad_intrinsics():
    with pytest.raises(ValueError):
        IdealPinhole(fx=0.0, fy=600.0, cx=1.0, cy=1.0)
    with pytest.raises(ValueError):
        IdealPinhole(fx=600.0, fy=-2.0, cx=1.0, cy=1.0)


def test_brown_conrady_zero_coefficients_matches_pinhole():
    pin = IdealPinhole(fx=500.0, fy=520.0, cx=31.5, cy=23.5)
    bc = BrownConradyPinhole(fx=500.0, fy=520.0, cx=31.5, cy=23.5)
    np.testing.assert_array_equal(pin.ray_map(64, 48), bc.ray_map(64, 48))


def test_brown_conrady_undistortion_matches_bisection_oracle():
    # Scalar radial oracle: x(1 + k1 x^2) = 0.5 with k1 = -0.2, root found
    # independently by bisection on the monotone branch.
    cam = BrownConradyPinhole(fx=1.0, fy=1.0, cx=0.0, cy=0.0, k1=-0.2)
    ray = cam.ray_direction(0.5, 0.0)
    assert ray[..., 0] == pytest.approx(0.5297299006510502, abs=1e-11)
    assert float(ray[..., 1]) == 0.0


def test_brown_conrady_diverges_outside_invertible_range():
    # x_d = 1.0 with k1 = -0.2 lies beyond the distortion maximum (~0.861):
    # no physical root exists and the fixed point oscillates.
    cam = BrownConradyPinhole(fx=1.0, fy=1.0, cx=0.0, cy=0.0, k1=-0.2)
    with pytest.raises(NonConvergentUndistortion):
        cam.ray_direction(1.0, 0.0)


def test_brown_conrady_roundtrip_through_distortion():
    cam = BrownConradyPinhole(
        fx=600.0, fy=610.0, cx=320.0, cy=240.0, k1=-0.1, k2=0.02, p1=1e-4, p2=-2e-4
    )
    rays = cam.ray_map(640, 480)
    x, y = rays[..., 0], rays[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + cam.k1 * r2 + cam.k2 * r2**2 + cam.k3 * r2**3
    xd = x * radial + 2 * cam.p1 * x * y + cam.p2 * (r2 + 2 * x * x)
    yd = y * radial + cam.p1 * (r2 + 2 * y * y) + 2 * cam.p2 * x * y
    uu, vv = np.meshgrid(np.arange(640.0), np.arange(480.0))
    np.testing.assert_allclose(cam.fx * xd + cam.cx, uu, atol=1e-9)
    np.testing.assert_allclose(cam.fy * yd + cam.cy, vv, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(
    fx=st.floats(100.0, 2000.0),
    cx=st.floats(-50.0, 50.0),
    k1=st.floats(-0.15, 0.15),
)
def test_brown_conrady_undistortion_inverts_distortion(fx, cx, k1):
    cam = BrownConradyPinhole(fx=fx, fy=fx, cx=cx, cy=0.0, k1=k1)
    u = np.linspace(cx - 0.2 * fx, cx + 0.2 * fx, 9).reshape(3, 3)
    v = np.zeros((3, 3))
    rays = cam.ray_direction(u, v)
    x = rays[..., 0]
    xd = x * (1.0 + k1 * (x * x))
    np.testing.assert_allclose(fx * xd + cx, u, atol=1e-8 * max(1.0, abs(cx)))


def test_tabulated_rays_returns_normalized_z():
    table = np.ones((4, 5, 3))
    table[..., 0] = 0.25
    table[..., 1] = -0.5
    table *= 3.0  # arbitrary per-pixel scale must be divided out
    cam = TabulatedRays(rays=table)
    rays = cam.ray_map(5, 4)
    np.testing.assert_allclose(rays[..., 2], 1.0, atol=0)
    np.testing.assert_allclose(rays[..., 0], 0.25, atol=1e-15)
    np.testing.assert_allclose(rays[..., 1], -0.5, atol=1e-15)


def test_tabulated_rays_size_mismatch():
    cam = TabulatedRays(rays=np.ones((4, 5, 3)))
    with pytest.raises(DimensionMismatch):
        cam.ray_map(6, 4)


def test_tabulated_rays_rejects_nonpositive_z():
    table = np.ones((2, 2, 3))
    table[0, 0, 2] = 0.0
    with pytest.raises(ValueError):
        TabulatedRays(rays=table)


def test_tabulated_rays_out_of_bounds_lookup():
    cam = TabulatedRays(rays=np.ones((4, 5, 3)))
    with pytest.raises(OutOfBounds):
        cam.ray_direction(5, 0)
    with pytest.raises(ValueError):
        cam.ray_direction(1.5, 0)
