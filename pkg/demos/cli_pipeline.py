"""The whole pipeline through the command-line interface.

Everything the library does is reachable from the `nint` CLI with files on
disk: PFM maps for normals/depth/rays, PGM for masks, INI-style configs for
cameras and scenes.  This demo shells out exactly as a user would:

    nint synth      render a scene to a working directory
    nint noise      corrupt the normal map (and optionally filter it)
    nint integrate  reconstruct depth from normals
    nint eval       compare a reconstruction against ground truth

Run:  python3 demos/cli_pipeline.py
Work happens in demos/out/pipeline/.
"""

from __future__ import annotations

import json
import pathlib
import subprocess
import sys

ROOT = pathlib.Path(__file__).parent / "out" / "pipeline"
ROOT.mkdir(parents=True, exist_ok=True)


def nint(*args: str) -> str:
    """Run one CLI invocation, echo it, fail loudly, return stdout."""
    cmd = [sys.executable, "-m", "nint", *args]
    print(f"$ nint {' '.join(args)}")
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(f"exit code {proc.returncode}")
    if proc.stdout:
        print("  " + proc.stdout.strip().replace("\n", "\n  "))
    return proc.stdout


(ROOT / "camera.cfg").write_text(
    "model = pinhole\nfx = 120\nfy = 120\ncx = 63.5\ncy = 63.5\n"
)
(ROOT / "scene.cfg").write_text(
    "scene = sphere\ncx = 0\ncy = 0\ncz = 2.5\nradius = 1\n"
)

scene_dir = ROOT / "scene"
nint("synth", "--scene", str(ROOT / "scene.cfg"), "--camera", str(ROOT / "camera.cfg"),
     "--size", "128x128", "--out", str(scene_dir))
print("  files: " + ", ".join(sorted(p.name for p in scene_dir.iterdir())) + "\n")

# Corrupt the rendered normals, then repair them with the visibility filter
# in the same pass (--filter needs the camera to orient the rays).
noisy = ROOT / "normals_noisy.pfm"
nint("noise", "--normals", str(scene_dir / "normals.pfm"),
     "--mode", "outliers:0.05", "--seed", "3",
     "--filter", "--camera", str(ROOT / "camera.cfg"),
     "--out", str(noisy))
print()

# Reconstruct from the filtered normals.
recon_dir = ROOT / "recon"
nint("integrate", "--normals", str(noisy),
     "--mask", str(scene_dir / "mask.pgm"),
     "--camera", str(ROOT / "camera.cfg"),
     "--out", str(recon_dir))
diag = json.loads((recon_dir / "diagnostics.json").read_text())
print(f"  diagnostics: {diag['iterations']} iterations, "
      f"final energy {diag['energy'][-1]:.3e}, "
      f"{diag['pairs']} pairs over {diag['pixels']} pixels\n")

# Score it against the rendered ground truth.  Alignment in log depth removes
# the multiplicative gauge a normal map cannot determine.
nint("eval", "--est", str(recon_dir / "depth.pfm"),
     "--gt", str(scene_dir / "depth_gt.pfm"),
     "--mask", str(scene_dir / "mask.pgm"),
     "--align", "median", "--domain", "log",
     "--report", str(ROOT / "metrics.csv"))
print(f"\nreport rows:\n  " + (ROOT / "metrics.csv").read_text().strip().replace("\n", "\n  "))
print("\n(on clean normals the same pipeline lands around 0.07% of mean depth;")
print(" the gap is what 5% outliers cost even after filtering)")
