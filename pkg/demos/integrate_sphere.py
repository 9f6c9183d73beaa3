"""Render a sphere cap, integrate its normal map, and measure the result.

The minimal library round trip: synthetic scene -> exact normals -> depth by
normal integration -> error metrics.  Also shows the two things worth
watching on any run: the objective trace and the gauge (a normal map fixes
depth only up to one multiplicative constant per connected region, so errors
are measured after median alignment in log depth).

Run:  python3 demos/integrate_sphere.py
Writes demos/out/sphere/{depth.pfm, preview.png}.
"""

from __future__ import annotations

import pathlib

import numpy as np

from nint.camera import IdealPinhole
from nint.io import write_depth_map
from nint.metrics import evaluate
from nint.solver import integrate
from nint.synth import SphereCap, render

OUT = pathlib.Path(__file__).parent / "out" / "sphere"
OUT.mkdir(parents=True, exist_ok=True)

camera = IdealPinhole(fx=120.0, fy=120.0, cx=63.5, cy=63.5)
scene = SphereCap(center=(0.0, 0.0, 2.5), radius=1.0)

depth_gt, normals, mask = render(scene, camera, 128, 128)
print(f"scene: sphere cap, {int(mask.sum())} of {mask.size} pixels on the surface")

# ---------------------------------------------------------------------------
# Integrate.  Defaults: 1200 outer iterations with early stopping, bilateral
# discontinuity weighting on, per-pair jump estimation on.
# ---------------------------------------------------------------------------

result = integrate(normals, mask, camera.ray_map(128, 128))
print(f"stopped after {result.iterations} outer iterations "
      f"(early_stop={result.stopped_early}), {result.cg_iterations} CG steps total")

trace = result.energy_trace
print("objective trace: "
      + "  ".join(f"t={t}: {trace[t]:.3e}" for t in (0, 1, 2, len(trace) - 1)))

# ---------------------------------------------------------------------------
# Metrics.  align="median", domain="log" removes exactly the multiplicative
# per-component gauge that a normal map cannot determine; everything left is
# real error.
# ---------------------------------------------------------------------------

report = evaluate(result.depth, depth_gt, result.graph.mask,
                  align="median", domain="log", components=result.graph.components)
mean_depth = float(depth_gt[result.graph.mask].mean())
print(f"MADE = {report.made:.3e}  ({100.0 * report.made / mean_depth:.4f}% of mean depth)")
print(f"RE   = {report.re_percent:.4f}%   ERA = {report.era_percent:.4f}%")

write_depth_map(OUT / "depth.pfm", result.depth, result.graph.mask)
print(f"wrote {OUT / 'depth.pfm'}")

# Optional side-by-side PNG; skipped cleanly when matplotlib is absent.
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not installed; skipping preview.png")
else:
    from nint.solver import gauge_align

    aligned = gauge_align(result.depth, depth_gt, result.graph.mask,
                          mode="median", domain="log",
                          components=result.graph.components)
    err = np.where(result.graph.mask, np.abs(aligned - depth_gt), np.nan)
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    for ax, (img, title) in zip(axes, [
        (np.where(mask, depth_gt, np.nan), "ground truth depth"),
        (np.where(result.graph.mask, aligned, np.nan), "reconstruction (aligned)"),
        (err, "absolute error"),
    ]):
        im = ax.imshow(img)
        ax.set_title(title)
        ax.axis("off")
        fig.colorbar(im, ax=ax, shrink=0.75)
    fig.tight_layout()
    fig.savefig(OUT / "preview.png", dpi=110)
    print(f"wrote {OUT / 'preview.png'}")
