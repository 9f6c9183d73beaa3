"""Central camera models and per-pixel ray directions.

Every model maps a pixel coordinate ``(u, v)`` to a ray direction
``tau = (tau_x, tau_y, 1)`` through the optical center, normalized so the
third component is exactly 1; a surface point seen at that pixel is
``p = z * tau`` with ``z`` the (positive) depth along the optical axis.

Conventions used throughout the package:

* camera frame: x right, y down, z forward (into the scene);
* pixel centers sit at integer coordinates, ``u`` along x in ``[0, W)`` and
  ``v`` along y in ``[0, H)``;
* only central projections are supported -- an orthographic camera has no
  optical center and is rejected wherever a model is constructed or parsed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonConvergentUndistortion, OutOfBounds

logger = logging.getLogger(__name__)

#: Fixed-point undistortion stops once the update is below this.
UNDISTORT_TOL = 1e-12

#: ... or after this many sweeps, whichever comes first.
UNDISTORT_MAX_ITERS = 50


def _check_focal(fx: float, fy: float) -> None:
    if not (np.isfinite(fx) and np.isfinite(fy)) or fx <= 0 or fy <= 0:
        raise ValueError(
            f"focal lengths must be positive and finite, got fx={fx}, fy={fy}; "
            "non-central projections (e.g. orthographic) are not supported"
        )


@dataclass(frozen=True)
class IdealPinhole:
    """Distortion-free pinhole: ``tau = ((u-cx)/fx, (v-cy)/fy, 1)``.

    The pixel-to-ray map is affine in the image coordinates, which several
    tests rely on.
    """

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        _check_focal(self.fx, self.fy)

    def ray_direction(self, u, v) -> np.ndarray:
        """Ray directions for pixel coordinates ``u, v`` (scalars or arrays)."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        x = (u - self.cx) / self.fx
        y = (v - self.cy) / self.fy
        return np.stack([x, y, np.ones_like(x)], axis=-1)

    def ray_map(self, width: int, height: int) -> np.ndarray:
        """Dense ``(H, W, 3)`` ray map over the full pixel grid."""
        vv, uu = np.mgrid[0:height, 0:width]
        return self.ray_direction(uu, vv)


@dataclass(frozen=True)
class BrownConradyPinhole:
    """Pinhole with Brown-Conrady radial (k1..k3) and tangential (p1, p2)
    distortion.

    Pixel coordinates are taken to be *distorted* observations; building a ray
    therefore undistorts the normalized coordinates with the standard
    fixed-point sweep

        x <- (x_d - tangential_x(x, y)) / radial(r^2)

    run to ``UNDISTORT_TOL`` or ``UNDISTORT_MAX_ITERS``. For parameters/pixels
    outside the invertible range of the polynomial the sweep does not settle
    and :class:`NonConvergentUndistortion` is raised -- by design there is no
    silent clamping.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self) -> None:
        _check_focal(self.fx, self.fy)
        for name in ("k1", "k2", "k3", "p1", "p2"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"distortion coefficient {name} must be finite")

    def distort_normalized(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Forward model: ideal normalized coords -> distorted ones."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        r2 = x * x + y * y
        radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
        xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x)
        yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y
        return xd, yd

    def undistort_normalized(self, xd, yd) -> tuple[np.ndarray, np.ndarray]:
        """Invert :meth:`distort_normalized` by fixed-point iteration."""
        xd = np.atleast_1d(np.asarray(xd, dtype=np.float64))
        yd = np.atleast_1d(np.asarray(yd, dtype=np.float64))
        x = xd.copy()
        y = yd.copy()
        for _ in range(UNDISTORT_MAX_ITERS):
            r2 = x * x + y * y
            radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
            tx = 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x)
            ty = self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y
            with np.errstate(divide="ignore", invalid="ignore"):
                x_new = (xd - tx) / radial
                y_new = (yd - ty) / radial
            if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(y_new))):
                raise NonConvergentUndistortion(
                    "undistortion produced non-finite values; distortion "
                    "parameters are outside the invertible range"
                )
            delta = max(
                float(np.max(np.abs(x_new - x))), float(np.max(np.abs(y_new - y)))
            )
            x, y = x_new, y_new
            if delta <= UNDISTORT_TOL:
                return x, y
        raise NonConvergentUndistortion(
            f"undistortion did not converge within {UNDISTORT_MAX_ITERS} "
            f"iterations (last update {delta:.3e}); the requested pixel lies "
            "outside the invertible range of the distortion polynomial"
        )

    def ray_direction(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        shape = np.broadcast(u, v).shape
        xd = (u - self.cx) / self.fx
        yd = (v - self.cy) / self.fy
        x, y = self.undistort_normalized(xd.ravel(), yd.ravel())
        x = x.reshape(shape)
        y = y.reshape(shape)
        return np.stack([x, y, np.ones_like(x)], axis=-1)

    def ray_map(self, width: int, height: int) -> np.ndarray:
        vv, uu = np.mgrid[0:height, 0:width]
        return self.ray_direction(uu, vv)


class TabulatedRays:
    """Camera given directly as a per-pixel ray table of shape ``(H, W, 3)``.

    Rays are normalized so the z component is exactly 1; tables stored with a
    different positive scale are rescaled on construction (with a warning).
    Tables containing non-positive or non-finite z components describe rays
    that never leave the camera forward half-space and are rejected.
    """

    def __init__(self, rays: np.ndarray):
        rays = np.asarray(rays, dtype=np.float64)
        if rays.ndim != 3 or rays.shape[2] != 3:
            raise ValueError(f"ray table must have shape (H, W, 3), got {rays.shape}")
        if not np.all(np.isfinite(rays)):
            raise ValueError("ray table contains non-finite values")
        tz = rays[:, :, 2]
        if np.any(tz <= 0):
            raise ValueError(
                "ray table has non-positive z components; rays must point "
                "into the scene (central camera, z forward)"
            )
        if not np.all(tz == 1.0):
            logger.warning(
                "ray table z components are not 1; rescaling %d rays",
                int(np.count_nonzero(tz != 1.0)),
            )
            rays = rays / tz[:, :, None]
        self._rays = rays
        self.height, self.width = rays.shape[:2]

    def ray_direction(self, u, v) -> np.ndarray:
        u_arr = np.asarray(u)
        v_arr = np.asarray(v)
        ui = np.asarray(u_arr, dtype=np.int64)
        vi = np.asarray(v_arr, dtype=np.int64)
        if np.any(ui != u_arr) or np.any(vi != v_arr):
            raise ValueError("tabulated rays are defined at integer pixel centers only")
        if (
            np.any(ui < 0)
            or np.any(ui >= self.width)
            or np.any(vi < 0)
            or np.any(vi >= self.height)
        ):
            raise OutOfBounds(
                f"pixel coordinates outside {self.width}x{self.height} ray table"
            )
        return self._rays[vi, ui]

    def ray_map(self, width: int, height: int) -> np.ndarray:
        if (width, height) != (self.width, self.height):
            raise DimensionMismatch(
                f"requested {width}x{height} ray map from a "
                f"{self.width}x{self.height} ray table"
            )
        return self._rays.copy()


#: Any supported camera model.
CameraModel = IdealPinhole | BrownConradyPinhole | TabulatedRays
