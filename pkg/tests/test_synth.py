"""Analytic scenes: exact depths, camera-facing normals, per-pair jumps."""

from __future__ import annotations

import numpy as np
import pytest

from nint.camera import IdealPinhole
from nint.errors import NonConvergentRoot
from nint.graph import build_graph
from nint.synth import (
    Plane,
    SphereCap,
    StepPlanes,
    Wave,
    ground_truth_alpha,
    render,
    render_depth,
    render_normals,
)


def _cam(size, f=60.0):
    return IdealPinhole(fx=f, fy=f, cx=(size - 1) / 2.0, cy=(size - 1) / 2.0)


# ---------------------------------------------------------------------------
# depth correctness


def test_fronto_parallel_plane_depth_is_exact():
    depth, mask = render_depth(Plane(point=(0.0, 0.0, 2.0), normal=(0.0, 0.0, -1.0)), _cam(9), 9, 9)
    assert mask.all()
    np.testing.assert_array_equal(depth, np.full((9, 9), 2.0))


def test_slanted_plane_points_lie_on_the_plane():
    scene = Plane(point=(0.1, -0.2, 2.5), normal=(0.3, -0.2, -1.0))
    cam = _cam(17)
    depth, mask = render_depth(scene, cam, 17, 17)
    assert mask.all()
    rays = cam.ray_map(17, 17)
    points = depth[..., None] * rays
    n = np.asarray(scene.normal)
    offsets = (points - np.asarray(scene.point)) @ n
    np.testing.assert_allclose(offsets, 0.0, atol=1e-12)


def test_sphere_axial_depth_and_surface_membership():
    scene = SphereCap(center=(0.0, 0.0, 4.0), radius=1.0)
    cam = IdealPinhole(fx=60.0, fy=60.0, cx=32.0, cy=32.0)  # odd grid: exact axial ray
    depth, mask = render_depth(scene, cam, 65, 65)
    assert depth[32, 32] == 3.0  # near root of z^2 - 8z + 15
    assert mask[32, 32] and not mask[0, 0]  # corner rays miss the cap
    assert np.all(depth[~mask] == 0.0)
    rays = cam.ray_map(65, 65)
    points = depth[..., None] * rays
    dist = np.linalg.norm(points - np.asarray(scene.center), axis=-1)
    np.testing.assert_allclose(dist[mask], scene.radius, atol=1e-12)


def test_wave_depth_satisfies_the_root_equation():
    scene = Wave(z0=2.0, amplitude=0.2, fu=3.0, fv=2.0)
    cam = _cam(33)
    depth, mask = render_depth(scene, cam, 33, 33)
    assert mask.all()
    rays = cam.ray_map(33, 33)
    x = depth * rays[..., 0]
    y = depth * rays[..., 1]
    residual = depth - scene.z0 - scene.amplitude * np.sin(scene.fu * x) * np.sin(scene.fv * y)
    np.testing.assert_allclose(residual, 0.0, atol=2e-12)


def test_precomputed_ray_map_matches_camera_path():
    scene = SphereCap(center=(0.0, 0.0, 3.0), radius=1.2)
    cam = _cam(16)
    rays = cam.ray_map(16, 16)
    d1, n1, m1 = render(scene, cam, 16, 16)
    d2, n2, m2 = render(scene, rays, 16, 16)
    assert d1.tobytes() == d2.tobytes()
    assert n1.tobytes() == n2.tobytes()
    assert (m1 == m2).all()


# ---------------------------------------------------------------------------
# normals


@pytest.mark.parametrize(
    "scene",
    [
        Plane(point=(0.0, 0.0, 2.0), normal=(0.4, -0.3, -1.0)),
        SphereCap(center=(0.2, -0.1, 3.0), radius=1.0),
        StepPlanes(z_near=2.0, z_far=3.0, split=(1.0, 0.4, -9.13)),
        Wave(z0=2.0, amplitude=0.15, fu=2.0, fv=3.0),
    ],
    ids=["plane", "sphere", "step", "wave"],
)
def test_normals_are_unit_and_camera_facing(scene):
    cam = _cam(21)
    depth, normals, mask = render(scene, cam, 21, 21)
    rays = cam.ray_map(21, 21)
    norms = np.linalg.norm(normals[mask], axis=-1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)
    n_dot_tau = np.einsum("...i,...i->...", normals, rays)[mask]
    assert np.all(n_dot_tau < 0)
    assert np.all(normals[~mask] == 0.0)


def test_plane_normal_is_flipped_to_face_camera():
    # stored normal points away from the origin; the render must flip it
    normals = render_normals(Plane(point=(0.0, 0.0, 2.0), normal=(0.0, 0.0, 1.0)), _cam(5), 5, 5)
    np.testing.assert_array_equal(normals[..., 2], np.full((5, 5), -1.0))


def test_sphere_normal_points_from_center_to_surface():
    scene = SphereCap(center=(0.0, 0.0, 4.0), radius=1.0)
    cam = IdealPinhole(fx=60.0, fy=60.0, cx=32.0, cy=32.0)
    depth, normals, mask = render(scene, cam, 65, 65)
    np.testing.assert_allclose(normals[32, 32], [0.0, 0.0, -1.0], atol=1e-15)


def test_wave_normal_matches_height_gradient():
    scene = Wave(z0=2.0, amplitude=0.15, fu=2.0, fv=3.0)
    cam = _cam(21)
    depth, normals, mask = render(scene, cam, 21, 21)
    rays = cam.ray_map(21, 21)
    x = depth * rays[..., 0]
    y = depth * rays[..., 1]

    def height(xx, yy):
        return scene.z0 + scene.amplitude * np.sin(scene.fu * xx) * np.sin(scene.fv * yy)

    step = 1e-6
    dzdx = (height(x + step, y) - height(x - step, y)) / (2 * step)
    dzdy = (height(x, y + step) - height(x, y - step)) / (2 * step)
    grad = np.stack([dzdx, dzdy, -np.ones_like(depth)], axis=-1)
    grad /= np.linalg.norm(grad, axis=-1, keepdims=True)
    np.testing.assert_allclose(normals, grad, atol=1e-5)


# ---------------------------------------------------------------------------
# ground-truth discontinuities


def test_alpha_is_zero_on_planes_and_tiny_on_smooth_curvature():
    cam = _cam(16)
    # exact for planes: the pair relation reproduces planar depth identically
    depth, normals, mask = render(Plane(point=(0.0, 0.0, 2.0), normal=(0.3, -0.2, -1.0)), cam, 16, 16)
    g = build_graph(normals, mask, cam.ray_map(16, 16))
    np.testing.assert_allclose(ground_truth_alpha(depth, g), 0.0, atol=1e-12)
    # curved surfaces leave only the O(pixel^2) curvature term, orders below a jump
    depth, normals, mask = render(SphereCap(center=(0.0, 0.0, 3.0), radius=1.0), cam, 16, 16)
    g = build_graph(normals, mask, cam.ray_map(16, 16))
    assert np.abs(ground_truth_alpha(depth, g)).max() < 1e-4


def test_alpha_encodes_the_step_jump():
    # unit-focal 1x2 strip: omega = omega_eps = 1 exactly, so
    # alpha = z_a / z_b - 1 and epsilon = alpha * z_b = z_a - z_b.
    scene = StepPlanes(z_near=2.0, z_far=3.0, split=(1.0, 0.0, -0.5))
    cam = IdealPinhole(fx=1.0, fy=1.0, cx=0.5, cy=0.0)
    depth, normals, mask = render(scene, cam, 2, 1)
    np.testing.assert_array_equal(depth, [[2.0, 3.0]])
    g = build_graph(normals, mask, cam.ray_map(2, 1))
    alpha = ground_truth_alpha(depth, g)
    pair_01 = np.nonzero((g.a == 0) & (g.b == 1))[0][0]
    pair_10 = np.nonzero((g.a == 1) & (g.b == 0))[0][0]
    assert alpha[pair_01] == pytest.approx(2.0 / 3.0 - 1.0, abs=1e-12)
    assert alpha[pair_10] == pytest.approx(3.0 / 2.0 - 1.0, abs=1e-12)
    eps = alpha * depth.ravel()[g.b]
    np.testing.assert_allclose(np.abs(eps), scene.z_far - scene.z_near, atol=1e-10)


def test_alpha_vanishes_away_from_the_split():
    scene = StepPlanes(z_near=2.0, z_far=3.0, split=(1.0, 0.0, -4.6))
    cam = _cam(10)
    depth, normals, mask = render(scene, cam, 10, 10)
    g = build_graph(normals, mask, cam.ray_map(10, 10))
    alpha = ground_truth_alpha(depth, g)
    crossing = depth.ravel()[g.a] != depth.ravel()[g.b]
    assert crossing.sum() == 2 * 10  # one vertical split, both directions
    np.testing.assert_array_equal(alpha[~crossing], 0.0)
    assert np.all(np.abs(alpha[crossing]) > 0.1)


# ---------------------------------------------------------------------------
# validation


def test_scene_validation_errors():
    with pytest.raises(ValueError):
        Plane(point=(0.0, 0.0, 2.0), normal=(0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        SphereCap(center=(0.0, 0.0, 3.0), radius=-1.0)
    with pytest.raises(ValueError):
        SphereCap(center=(0.0, 0.0, 0.5), radius=1.0)  # camera inside
    with pytest.raises(ValueError):
        StepPlanes(z_near=-2.0, z_far=3.0, split=(1.0, 0.0, -0.5))
    with pytest.raises(ValueError):
        StepPlanes(z_near=2.0, z_far=3.0, split=(0.0, 0.0, -0.5))
    with pytest.raises(ValueError):
        Wave(z0=2.0, amplitude=0.5, fu=1.0, fv=1.0)  # A >= 0.2 z0
    with pytest.raises(ValueError):
        Wave(z0=-1.0, amplitude=0.0, fu=1.0, fv=1.0)


def test_step_split_through_pixel_center_is_rejected():
    scene = StepPlanes(z_near=2.0, z_far=3.0, split=(1.0, 0.0, -2.0))
    with pytest.raises(ValueError, match="pixel center"):
        render_depth(scene, _cam(5), 5, 5)


def test_wave_fold_over_is_rejected():
    scene = Wave(z0=1.0, amplitude=0.15, fu=100.0, fv=1.0)
    with pytest.raises(ValueError, match="folds over"):
        render_depth(scene, _cam(33), 33, 33)


def test_wave_bisection_reports_non_convergence():
    # absurd scale: 200 halvings of the bracket cannot reach the absolute tol
    scene = Wave(z0=1e50, amplitude=0.0, fu=1.0, fv=1.0)
    with pytest.raises(NonConvergentRoot):
        render_depth(scene, _cam(3), 3, 3)
