"""Analytic ground-truth scenes rendered along camera rays.

Each scene intersects the ray ``z * tau`` per pixel in closed form (or by
bisection for the wave surface) and reports exact unit normals oriented
toward the camera (``n . tau < 0``).  That gives bit-trustworthy ground
truth for depth, normals, masks, and per-pair discontinuities without any
meshing or sampling error.

Scenes are value objects; rendering goes through :func:`render_depth`,
:func:`render_normals`, or the bundled :func:`render`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraModel
from .errors import NonConvergentRoot
from .formulation import alpha_from_depths
from .graph import PairGraph

#: Plane/step rays this close to edge-on are masked out rather than rendered.
EDGE_ON_TOL = 1e-12

WAVE_ROOT_TOL = 1e-12
WAVE_ROOT_MAX_ITERS = 200


@dataclass(frozen=True)
class Plane:
    """Infinite plane through ``point`` with unit ``normal``."""

    point: tuple[float, float, float]
    normal: tuple[float, float, float]

    def __post_init__(self) -> None:
        n = np.linalg.norm(self.normal)
        if not np.isfinite(n) or n == 0:
            raise ValueError(f"plane normal must be a nonzero vector, got {self.normal}")
        object.__setattr__(self, "normal", tuple(np.asarray(self.normal, float) / n))


@dataclass(frozen=True)
class SphereCap:
    """Camera-facing cap of a sphere; the camera must sit outside it."""

    center: tuple[float, float, float]
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")
        if np.linalg.norm(self.center) <= self.radius:
            raise ValueError("camera (origin) must lie outside the sphere")


@dataclass(frozen=True)
class StepPlanes:
    """Two fronto-parallel planes split by the image-space line a·u+b·v+c=0.

    Pixels with ``a u + b v + c < 0`` see ``z_near``, the rest ``z_far``.
    The line must pass between pixel centers (a center exactly on the line
    is a rendering error): the depth jump then falls at a pair midpoint.
    """

    z_near: float
    z_far: float
    split: tuple[float, float, float]

    def __post_init__(self) -> None:
        if self.z_near <= 0 or self.z_far <= 0:
            raise ValueError("step depths must be positive")
        if self.split[0] == 0 and self.split[1] == 0:
            raise ValueError("split line must have a nonzero image-plane direction")


@dataclass(frozen=True)
class Wave:
    """Graph surface ``z(x, y) = z0 + A sin(fu x) sin(fv y)`` in scene units."""

    z0: float
    amplitude: float
    fu: float
    fv: float

    def __post_init__(self) -> None:
        if self.z0 <= 0:
            raise ValueError(f"wave base depth must be positive, got {self.z0}")
        if not (0 <= self.amplitude < 0.2 * self.z0):
            raise ValueError(
                f"wave amplitude must satisfy 0 <= A < 0.2 z0 = {0.2 * self.z0:g}, "
                f"got {self.amplitude}"
            )


Scene = Plane | SphereCap | StepPlanes | Wave


def _rays(camera: CameraModel | np.ndarray, width: int, height: int) -> np.ndarray:
    if isinstance(camera, np.ndarray):
        return camera.astype(np.float64, copy=False)
    return camera.ray_map(width, height)


def render_depth(
    scene: Scene, camera: CameraModel | np.ndarray, width: int, height: int
) -> tuple[np.ndarray, np.ndarray]:
    """Depth map and validity mask (False where the ray misses the scene)."""
    rays = _rays(camera, width, height)
    return _intersect(scene, rays)


def render_normals(
    scene: Scene, camera: CameraModel | np.ndarray, width: int, height: int
) -> np.ndarray:
    """Exact unit normals at the intersections, oriented with ``n . tau < 0``.

    Off-mask pixels hold zeros.
    """
    rays = _rays(camera, width, height)
    depth, mask = _intersect(scene, rays)
    normals = _surface_normals(scene, rays, depth)
    normals[~mask] = 0.0
    return normals


def render(
    scene: Scene, camera: CameraModel | np.ndarray, width: int, height: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Convenience bundle: ``(depth, normals, mask)`` with one intersection pass."""
    rays = _rays(camera, width, height)
    depth, mask = _intersect(scene, rays)
    normals = _surface_normals(scene, rays, depth)
    normals[~mask] = 0.0
    return depth, normals, mask


def ground_truth_alpha(depth_gt: np.ndarray, graph: PairGraph) -> np.ndarray:
    """Exact per-directed-pair discontinuities ``(z_a / z_b - omega) / omega_eps``.

    This is the same expression the solver's update scheme converges to,
    evaluated at ground truth; feeding it back with activation 1 reproduces
    the true log-depth differences identically.  Pairs that cannot express a
    z discontinuity (omega_eps ~ 0) get 0.
    """
    flat = np.asarray(depth_gt, dtype=np.float64).ravel()
    return alpha_from_depths(flat[graph.a], flat[graph.b], graph.coeffs)


# ---------------------------------------------------------------------------
# per-scene geometry


def _intersect(scene: Scene, rays: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(scene, Plane):
        n = np.asarray(scene.normal)
        n_dot_tau = rays @ n
        plane_offset = float(n @ np.asarray(scene.point, dtype=np.float64))
        edge_on = np.abs(n_dot_tau) < EDGE_ON_TOL
        with np.errstate(divide="ignore", invalid="ignore"):
            depth = np.where(edge_on, 0.0, plane_offset / n_dot_tau)
        mask = ~edge_on & (depth > 0)
    elif isinstance(scene, SphereCap):
        c = np.asarray(scene.center, dtype=np.float64)
        tau_sq = np.einsum("...i,...i->...", rays, rays)
        tau_c = rays @ c
        disc = tau_c**2 - tau_sq * (c @ c - scene.radius**2)
        mask = disc > 0
        # Near root via the product-of-roots form: no cancellation when the
        # ray grazes the sphere.
        q = tau_c + np.sqrt(np.where(mask, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            depth = np.where(mask & (q > 0), (c @ c - scene.radius**2) / q, 0.0)
        mask &= depth > 0
    elif isinstance(scene, StepPlanes):
        a, b, c = scene.split
        h, w = rays.shape[:2]
        uu, vv = np.meshgrid(np.arange(w), np.arange(h))
        side = a * uu + b * vv + c
        if np.any(side == 0):
            raise ValueError(
                "step split line passes through a pixel center; shift it by half a pixel"
            )
        depth = np.where(side < 0, scene.z_near, scene.z_far)
        mask = np.ones(depth.shape, dtype=bool)
    elif isinstance(scene, Wave):
        depth = _wave_roots(scene, rays)
        mask = np.ones(depth.shape, dtype=bool)
    else:
        raise TypeError(f"not a scene: {scene!r}")
    depth = depth.astype(np.float64, copy=False)
    depth[~mask] = 0.0
    return depth, mask


def _surface_normals(scene: Scene, rays: np.ndarray, depth: np.ndarray) -> np.ndarray:
    shape = rays.shape
    if isinstance(scene, Plane):
        n = np.asarray(scene.normal, dtype=np.float64)
        normals = np.broadcast_to(n, shape).copy()
        # A plane is visible from exactly one side; flip the stored normal
        # to face the camera (depth is invariant: both signs cancel).
        flip = (rays @ n) > 0
        normals[flip] *= -1.0
    elif isinstance(scene, SphereCap):
        c = np.asarray(scene.center, dtype=np.float64)
        points = depth[..., None] * rays
        normals = (points - c) / scene.radius
        # The near intersection always faces the camera; renormalize to
        # wash out the roundoff of the division by r.
        normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    elif isinstance(scene, StepPlanes):
        normals = np.broadcast_to(np.array([0.0, 0.0, -1.0]), shape).copy()
    elif isinstance(scene, Wave):
        x = depth * rays[..., 0]
        y = depth * rays[..., 1]
        dzdx = scene.amplitude * scene.fu * np.cos(scene.fu * x) * np.sin(scene.fv * y)
        dzdy = scene.amplitude * scene.fv * np.sin(scene.fu * x) * np.cos(scene.fv * y)
        normals = np.stack([dzdx, dzdy, -np.ones_like(depth)], axis=-1)
        normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    else:
        raise TypeError(f"not a scene: {scene!r}")
    return normals


def _wave_roots(scene: Wave, rays: np.ndarray) -> np.ndarray:
    """Bisect ``z - z0 - A sin(fu z tau_x) sin(fv z tau_y) = 0`` per pixel.

    The bracket [0.1 z0, 10 z0] always encloses a root (|A sin sin| < 0.2
    z0); uniqueness additionally needs the surface to stay a single-valued
    graph along every ray, i.e. A (fu |tau_x| + fv |tau_y|) < 1.
    """
    tx = rays[..., 0]
    ty = rays[..., 1]
    steep = scene.amplitude * (scene.fu * np.abs(tx) + scene.fv * np.abs(ty))
    if np.any(steep >= 1.0):
        raise ValueError(
            "wave surface folds over along some rays "
            f"(max A (fu |tau_x| + fv |tau_y|) = {float(steep.max()):.3g} >= 1); "
            "reduce amplitude or frequencies"
        )

    def g(z):
        return z - scene.z0 - scene.amplitude * np.sin(scene.fu * z * tx) * np.sin(
            scene.fv * z * ty
        )

    lo = np.full(tx.shape, 0.1 * scene.z0, dtype=np.float64)
    hi = np.full(tx.shape, 10.0 * scene.z0, dtype=np.float64)
    for _ in range(WAVE_ROOT_MAX_ITERS):
        mid = 0.5 * (lo + hi)
        below = g(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if float(np.max(hi - lo)) <= WAVE_ROOT_TOL:
            return 0.5 * (lo + hi)
    raise NonConvergentRoot(
        f"wave-depth bisection did not reach {WAVE_ROOT_TOL:g} in "
        f"{WAVE_ROOT_MAX_ITERS} iterations (residual interval {float(np.max(hi - lo)):.3g})"
    )
