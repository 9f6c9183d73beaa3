"""Exact pair relation vs finite differences, on the scenes where it matters.

The package ships two per-pair depth relations behind the same solver:

* ``ours`` -- the closed-form local-plane relation; exact for planar patches
  under any central camera,
* ``bini`` -- the screen-space finite-difference relation used by bilateral
  normal integration; exact only in the limit of vanishing pixel size.

This script measures both at ground truth (residuals: how wrong is the
relation itself?) and end to end (reconstruction error after running the
full solver with each).

Run:  python3 demos/bini_comparison.py
"""

from __future__ import annotations

import numpy as np

from nint.camera import BrownConradyPinhole, IdealPinhole
from nint.metrics import formulation_residuals, made
from nint.solver import Method, SolverConfig, integrate
from nint.synth import Plane, SphereCap, render

cam = IdealPinhole(fx=60.0, fy=60.0, cx=31.5, cy=31.5)

# ---------------------------------------------------------------------------
# Residuals at ground truth.  On a slanted plane the local-plane relation is
# an identity (roundoff only); the finite-difference one carries an O(h)
# linearization error that grows with slant.
# ---------------------------------------------------------------------------

print("pair-relation residual at ground truth (mean over pairs):")
print(f"  {'scene':<26} {'ours':>12} {'bini':>12}")
for slope in (0.1, 0.3, 0.6):
    scene = Plane(point=(0.0, 0.0, 2.0), normal=(slope, -0.5 * slope, -1.0))
    depth, normals, mask = render(scene, cam, 64, 64)
    r_ours, _ = formulation_residuals(normals, depth, cam)
    r_bini, _ = formulation_residuals(normals, depth, cam, method=Method.BINI)
    print(f"  plane, slope {slope:<12} {r_ours:>12.3e} {r_bini:>12.3e}")

sphere = SphereCap(center=(0.0, 0.0, 2.5), radius=1.0)
depth, normals, mask = render(sphere, cam, 64, 64)
r_ours, _ = formulation_residuals(normals, depth, cam)
r_bini, _ = formulation_residuals(normals, depth, cam, method=Method.BINI)
print(f"  {'sphere cap':<26} {r_ours:>12.3e} {r_bini:>12.3e}")
print("  (on the curved sphere both relations carry a discretization term;")
print("   on planes only the finite-difference one does)")

# ---------------------------------------------------------------------------
# End to end.  Same solver, same weights, same iterations -- only the pair
# relation changes.
# ---------------------------------------------------------------------------

def reconstruct(normals, mask, depth_gt, ray_map, method: Method) -> float:
    r = integrate(normals, mask, ray_map, config=SolverConfig(method=method))
    return made(r.depth, depth_gt, r.graph.mask,
                align="median", domain="log", components=r.graph.components)


print("\nreconstruction MADE, full solver:")
print(f"  {'scene':<26} {'ours':>12} {'bini':>12} {'ratio':>8}")
rows = []
for name, scene in [
    ("plane, slope 0.3", Plane(point=(0.0, 0.0, 2.0), normal=(0.3, -0.15, -1.0))),
    ("sphere cap", sphere),
]:
    depth, normals, mask = render(scene, cam, 64, 64)
    rows.append((name, depth, normals, mask, cam.ray_map(64, 64)))

# Same sphere through a distorted camera: the finite-difference relation
# linearizes pixel steps as if the projection were an ideal pinhole, so the
# distortion turns into systematic error it cannot see.
dist_cam = BrownConradyPinhole(fx=60.0, fy=60.0, cx=31.5, cy=31.5, k1=-0.2)
depth, normals, mask = render(sphere, dist_cam, 64, 64)
rows.append(("sphere, k1=-0.2 camera", depth, normals, mask, dist_cam.ray_map(64, 64)))

for name, depth, normals, mask, ray_map in rows:
    e_ours = reconstruct(normals, mask, depth, ray_map, Method.OURS)
    e_bini = reconstruct(normals, mask, depth, ray_map, Method.BINI)
    print(f"  {name:<26} {e_ours:>12.3e} {e_bini:>12.3e} {e_bini / e_ours:>7.1f}x")

print("\nreading: exactness on slanted geometry and correctness under real")
print("camera models is where the closed-form relation pays off; on a smooth")
print("sphere through an ideal pinhole both discretizations are comparable.")
