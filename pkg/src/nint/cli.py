"""Command-line front end: synth, integrate, eval, residuals, noise, ablate.

Every subcommand is deterministic given its flags (plus the seed for
``noise``): outputs carry no timestamps or environment fingerprints, so
repeated runs are byte-identical.  Heavy imports happen inside the handlers
to keep ``--help`` quick and to let NINT_THREADS take effect before the
numeric stack loads.

Exit codes: 0 on success, 1 on a computation/configuration error (message on
stderr), 2 on flag errors (argparse usage text).
"""

from __future__ import annotations

import argparse
import os
import sys

# BLAS pools read these at import time, hence the env capping runs in main()
# before the first numpy import anywhere in the package.
_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _configure_threads() -> None:
    """Honor NINT_THREADS (0 or unset = leave the BLAS auto-sizing alone)."""
    raw = os.environ.get("NINT_THREADS", "").strip()
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"NINT_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"NINT_THREADS must be >= 0, got {n}")
    if n == 0:
        return
    for var in _THREAD_ENV_VARS:
        os.environ.setdefault(var, str(n))


# -- argparse type callables (lazy imports so a bad flag exits 2, fast) ------


def _size(text: str) -> tuple[int, int]:
    w, sep, h = text.lower().partition("x")
    if not sep:
        raise ValueError(f"size must look like 640x480, got {text!r}")
    width, height = int(w), int(h)
    if width <= 0 or height <= 0:
        raise ValueError(f"size must be positive, got {text!r}")
    return width, height


def _gamma_mode(text: str):
    from .formulation import GammaMode

    return GammaMode.parse(text)


def _lambda_mode(text: str):
    from .formulation import LambdaMode

    return LambdaMode.parse(text)


def _connectivity(text: str):
    from .graph import Connectivity

    return Connectivity.parse(text)


def _method(text: str):
    from .solver import Method

    return Method.parse(text)


def _noise_spec(text: str):
    kind, sep, value = text.partition(":")
    if not sep:
        raise ValueError(f"noise mode must be outliers:F or rot:S, got {text!r}")
    return kind.strip(), float(value)


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise ValueError(f"seed must fit in an unsigned 64-bit int, got {text!r}")
    return value


# -- shared plumbing ----------------------------------------------------------


def _load_normals(path):
    """Read a normal map plus the valid-pixel mask implied by zero vectors."""
    import numpy as np

    from .io import read_normal_map

    normals, _ = read_normal_map(path)
    implied = np.linalg.norm(normals, axis=-1) > 0
    return normals, implied


def _solver_config(args, **overrides):
    from .solver import SolverConfig

    kwargs = dict(
        max_outer_iters=getattr(args, "iters", 1200),
        method=getattr(args, "method", _method("ours")),
        connectivity=getattr(args, "connectivity", _connectivity("4")),
        lambda_mode=getattr(args, "lambda_m", _lambda_mode("const:0.5")),
        gamma_mode=getattr(args, "gamma_mode", _gamma_mode("full")),
        k=getattr(args, "k", 2.0),
        alpha_enabled=not getattr(args, "no_alpha", False),
    )
    if hasattr(args, "q"):
        from .formulation import BetaParams

        kwargs["beta"] = BetaParams(q=args.q, rho=args.rho)
    kwargs.update(overrides)
    return SolverConfig(**kwargs)


def _write_alpha_maps(out_dir, graph, alpha) -> None:
    """Scatter per-pair alphas into one map per offset direction (at pixel a)."""
    import numpy as np

    from .io import write_pfm

    h, w = graph.mask.shape
    for k_idx, offset in enumerate(graph.connectivity.offsets):
        amap = np.zeros(h * w, dtype=np.float64)
        sel = graph.k == k_idx
        amap[graph.a[sel]] = alpha[sel]
        write_pfm(
            os.path.join(out_dir, f"alpha_gt_{graph.offset_name(k_idx)}.pfm"),
            amap.reshape(h, w),
        )


def _read_alpha_maps(alpha_dir, graph):
    """Inverse of :func:`_write_alpha_maps` for the run's connectivity."""
    import numpy as np

    from .io import read_pfm

    alpha = np.zeros(graph.n_pairs, dtype=np.float64)
    for k_idx in range(len(graph.connectivity.offsets)):
        path = os.path.join(alpha_dir, f"alpha_gt_{graph.offset_name(k_idx)}.pfm")
        amap = np.asarray(read_pfm(path), dtype=np.float64).ravel()
        if amap.size != graph.n_pixels:
            from .errors import DimensionMismatch

            raise DimensionMismatch(
                f"{path}: {amap.size} pixels, graph has {graph.n_pixels}"
            )
        sel = graph.k == k_idx
        alpha[sel] = amap[graph.a[sel]]
    return alpha


# -- subcommand handlers ------------------------------------------------------


def _cmd_synth(args) -> int:
    import numpy as np

    from .graph import Connectivity, build_graph
    from .io import (
        read_camera_config,
        read_scene_config,
        write_depth_map,
        write_mask,
        write_normal_map,
        write_pfm,
    )
    from .synth import ground_truth_alpha, render

    scene = read_scene_config(args.scene)
    camera = read_camera_config(args.camera)
    width, height = args.size
    depth, normals, mask = render(scene, camera, width, height)
    rays = camera.ray_map(width, height)

    os.makedirs(args.out, exist_ok=True)
    write_normal_map(os.path.join(args.out, "normals.pfm"), normals)
    write_depth_map(os.path.join(args.out, "depth_gt.pfm"), depth, mask)
    write_mask(os.path.join(args.out, "mask.pgm"), mask)
    write_pfm(os.path.join(args.out, "rays.pfm"), rays)

    # Ground-truth discontinuities for every direction an integrate run might
    # use, so --alpha-gt works regardless of the chosen connectivity.
    graph = build_graph(normals, mask, rays, connectivity=Connectivity.EIGHT)
    alpha = ground_truth_alpha(depth, graph)
    _write_alpha_maps(args.out, graph, alpha)
    print(f"wrote {args.out}: {int(np.count_nonzero(mask))} masked pixels")
    return 0


def _cmd_integrate(args) -> int:
    import json

    import numpy as np

    from .graph import build_graph
    from .io import read_camera_config, read_mask, write_depth_map, write_pfm
    from .solver import integrate

    normals, implied = _load_normals(args.normals)
    mask = read_mask(args.mask) & implied
    camera = read_camera_config(args.camera)
    rays = camera.ray_map(mask.shape[1], mask.shape[0])
    config = _solver_config(args)

    graph = build_graph(
        normals,
        mask,
        rays,
        connectivity=config.connectivity,
        lambda_mode=config.lambda_mode,
        gamma_mode=config.gamma_mode,
    )
    alpha_fixed = None
    if args.alpha_gt is not None:
        alpha_fixed = _read_alpha_maps(args.alpha_gt, graph)

    result = integrate(
        normals, mask, rays, config=config, alpha_fixed=alpha_fixed, graph=graph
    )

    os.makedirs(args.out, exist_ok=True)
    write_depth_map(os.path.join(args.out, "depth.pfm"), result.depth, graph.mask)

    # Per-pixel discontinuity summary: the largest |epsilon| over the pairs
    # anchored at each pixel (signed jumps live on pairs, not pixels).
    h, w = graph.mask.shape
    eps_map = np.zeros(h * w, dtype=np.float64)
    np.maximum.at(eps_map, graph.a, np.abs(result.epsilon))
    write_pfm(os.path.join(args.out, "epsilon.pfm"), eps_map.reshape(h, w))

    for k_idx in range(len(graph.connectivity.offsets)):
        wmap = np.zeros(h * w, dtype=np.float64)
        sel = graph.k == k_idx
        wmap[graph.a[sel]] = result.weights[sel]
        write_pfm(
            os.path.join(args.out, f"weights_{graph.offset_name(k_idx)}.pfm"),
            wmap.reshape(h, w),
        )

    diagnostics = {
        "method": config.method.value,
        "connectivity": config.connectivity.value,
        "gamma_mode": str(config.gamma_mode),
        "lambda_mode": str(config.lambda_mode),
        "alpha_enabled": bool(config.alpha_enabled and alpha_fixed is None),
        "alpha_injected": alpha_fixed is not None,
        "iterations": result.iterations,
        "stopped_early": result.stopped_early,
        "cg_iterations": result.cg_iterations,
        "cg_stagnations": result.cg_stagnations,
        "energy": [float(e) for e in result.energy_trace],
        "pixels": graph.n_pixels,
        "pairs": graph.n_pairs,
        "components": graph.n_components,
        "dropped_pairs": graph.n_dropped_pairs,
        "notes": result.notes,
    }
    with open(os.path.join(args.out, "diagnostics.json"), "w") as fh:
        json.dump(diagnostics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"integrated {graph.n_pixels} pixels in {result.iterations} iterations"
        f" (energy {result.energy_trace[-1]:.6e})"
    )
    return 0


def _cmd_eval(args) -> int:
    from .io import read_depth_map, read_mask, write_metrics_report
    from .metrics import evaluate

    est = read_depth_map(args.est)
    gt = read_depth_map(args.gt)
    mask = read_mask(args.mask) & (gt > 0) & (est > 0)
    report = evaluate(est, gt, mask, align=args.align, domain=args.domain)
    write_metrics_report(args.report, report)
    print(
        f"MADE {report.made:.6g}  RE {report.re_percent:.4f}%"
        f"  ERA {report.era_percent:.4f}%  ({report.pixel_count} px)"
    )
    return 0


def _cmd_residuals(args) -> int:
    import numpy as np

    from .io import read_camera_config, write_report_csv
    from .metrics import formulation_residuals

    normals, implied = _load_normals(args.normals)
    from .io import read_depth_map

    depth_gt = read_depth_map(args.depth_gt)
    camera = read_camera_config(args.camera)
    variant = args.variant.replace("-", "_")
    mean, std = formulation_residuals(
        normals, depth_gt, camera, method=args.method, variant=variant
    )
    pixel_count = int(np.count_nonzero(implied & (depth_gt > 0)))
    write_report_csv(
        args.report,
        {f"residual_mean_{variant}": mean, f"residual_std_{variant}": std},
        alignment="none",
        pixel_count=pixel_count,
    )
    print(f"{args.method.value}/{variant}: mean {mean:.6e}  std {std:.6e}")
    return 0


def _cmd_noise(args) -> int:
    from .io import read_camera_config, write_normal_map
    from .noise import Outliers, Rotational, corrupt, mitigation_filter

    normals, mask = _load_normals(args.normals)
    kind, value = args.mode
    if kind == "outliers":
        spec = Outliers(fraction=value, seed=args.seed)
    elif kind == "rot":
        spec = Rotational(sigma_deg=value, seed=args.seed)
    else:
        raise ValueError(f"unknown noise mode {kind!r}; expected outliers or rot")
    noisy = corrupt(normals, mask, spec)
    if args.filter:
        if args.camera is None:
            raise ValueError("--filter needs --camera to orient the rays")
        camera = read_camera_config(args.camera)
        rays = camera.ray_map(mask.shape[1], mask.shape[0])
        noisy = mitigation_filter(noisy, rays, mask)
    write_normal_map(args.out, noisy)
    print(f"wrote {args.out}")
    return 0


# Sweep grids: one row per point, hyperparameters as columns, everything not
# swept pinned at the defaults.  The gamma and lambda suites run with the
# discontinuity estimate disabled so the geometry term is measured in
# isolation; the beta suite ablates the activation itself so it runs with it.
_ABLATE_FIELDS = (
    "suite",
    "gamma_mode",
    "lambda_m",
    "connectivity",
    "q",
    "rho",
    "k",
    "alpha",
    "iterations",
    "made",
    "re_percent",
    "era_percent",
)


def _ablate_grid(suite: str):
    gammas = ["full", "no_f", "const_f:1000", "const_f:2000", "const_f:3000",
              "no_ndott"]
    lambdas = ["const:0.5", "ntau:1", "ntau:2", "ntau:3", "nz:1", "nz:2",
               "nz:3", "prod:1", "prod:2", "prod:3"]
    if suite == "gamma":
        return [{"gamma_mode": g, "alpha": False} for g in gammas]
    if suite == "lambda":
        return [{"lambda_m": m, "alpha": False} for m in lambdas]
    if suite == "beta":
        return [
            {"q": q, "rho": rho, "alpha": True}
            for rho in (0.25, 0.5)
            for q in (2.5, 5.0, 10.0, 15.0, 25.0, 40.0, 50.0, 100.0, 1000.0)
        ]
    if suite == "connectivity":
        return [
            {"connectivity": c, "alpha": alpha}
            for c in ("4", "diag4", "8")
            for alpha in (True, False)
        ]
    raise ValueError(f"unknown ablation suite {suite!r}")


def _cmd_ablate(args) -> int:
    import csv

    from .formulation import BetaParams
    from .io import read_depth_map, read_mask, read_ray_map
    from .metrics import evaluate
    from .solver import SolverConfig, integrate

    base = args.base
    normals, implied = _load_normals(os.path.join(base, "normals.pfm"))
    depth_gt = read_depth_map(os.path.join(base, "depth_gt.pfm"))
    mask = read_mask(os.path.join(base, "mask.pgm")) & implied
    rays = read_ray_map(os.path.join(base, "rays.pfm"))

    rows = []
    for point in _ablate_grid(args.suite):
        config = SolverConfig(
            gamma_mode=_gamma_mode(point.get("gamma_mode", "full")),
            lambda_mode=_lambda_mode(point.get("lambda_m", "const:0.5")),
            connectivity=_connectivity(point.get("connectivity", "4")),
            beta=BetaParams(q=point.get("q", 50.0), rho=point.get("rho", 0.25)),
            alpha_enabled=point["alpha"],
        )
        result = integrate(normals, mask, rays, config=config)
        # Align in log depth: the reconstruction is gauge-free in scale, and
        # an additive (linear-domain) offset cannot absorb a multiplicative
        # gauge -- it would drown every sweep effect in the same mismatch.
        report = evaluate(
            result.depth, depth_gt, result.graph.mask,
            align="median", domain="log",
            components=result.graph.components,
        )
        rows.append({
            "suite": args.suite,
            "gamma_mode": str(config.gamma_mode),
            "lambda_m": str(config.lambda_mode),
            "connectivity": config.connectivity.value,
            "q": repr(config.beta.q),
            "rho": repr(config.beta.rho),
            "k": repr(config.k),
            "alpha": str(config.alpha_enabled).lower(),
            "iterations": result.iterations,
            "made": repr(report.made),
            "re_percent": repr(report.re_percent),
            "era_percent": repr(report.era_percent),
        })
        print(
            f"{args.suite}: {rows[-1]['gamma_mode']} {rows[-1]['lambda_m']}"
            f" conn={rows[-1]['connectivity']} q={rows[-1]['q']}"
            f" rho={rows[-1]['rho']} alpha={rows[-1]['alpha']}"
            f" -> MADE {report.made:.6g}"
        )

    with open(args.report, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_ABLATE_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nint",
        description="Discontinuity-aware normal integration under central cameras.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene to disk")
    p.add_argument("--scene", required=True, help="scene config file")
    p.add_argument("--camera", required=True, help="camera config file")
    p.add_argument("--size", required=True, type=_size, help="WxH, e.g. 128x128")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("integrate", help="reconstruct depth from a normal map")
    p.add_argument("--normals", required=True, help="normal map (.pfm, 3-channel)")
    p.add_argument("--mask", required=True, help="valid-pixel mask (.pgm)")
    p.add_argument("--camera", required=True, help="camera config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--iters", type=int, default=1200,
                   help="outer iteration cap (default 1200)")
    p.add_argument("--no-alpha", action="store_true",
                   help="skip the discontinuity-magnitude updates")
    p.add_argument("--method", type=_method, default=_method("ours"),
                   help="ours | bini (default ours)")
    p.add_argument("--connectivity", type=_connectivity, default=_connectivity("4"),
                   help="4 | diag4 | 8 (default 4)")
    p.add_argument("--lambda-m", type=_lambda_mode, default=_lambda_mode("const:0.5"),
                   dest="lambda_m",
                   help="mid-ray blend: const:0.5 | ntau:K | nz:K | prod:K")
    p.add_argument("--gamma-mode", type=_gamma_mode, default=_gamma_mode("full"),
                   help="residual scaling: full | no_f | const_f:V | no_ndott")
    p.add_argument("--k", type=float, default=2.0,
                   help="bilateral weight sharpness (default 2)")
    p.add_argument("--q", type=float, default=50.0,
                   help="discontinuity activation sharpness (default 50)")
    p.add_argument("--rho", type=float, default=0.25,
                   help="discontinuity activation threshold (default 0.25)")
    p.add_argument("--alpha-gt", default=None, metavar="DIR",
                   help="directory of alpha_gt_<direction>.pfm files to inject")
    p.set_defaults(func=_cmd_integrate)

    p = sub.add_parser("eval", help="compare a reconstruction against ground truth")
    p.add_argument("--est", required=True, help="estimated depth (.pfm)")
    p.add_argument("--gt", required=True, help="ground-truth depth (.pfm)")
    p.add_argument("--mask", required=True, help="valid-pixel mask (.pgm)")
    p.add_argument("--align", choices=("median", "mean"), default="median",
                   help="gauge statistic (default median)")
    p.add_argument("--domain", choices=("log", "linear"), default="linear",
                   help="gauge domain (default linear)")
    p.add_argument("--report", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("residuals",
                       help="per-pair model residuals at ground-truth depth")
    p.add_argument("--normals", required=True, help="normal map (.pfm)")
    p.add_argument("--depth-gt", required=True, dest="depth_gt",
                   help="ground-truth depth (.pfm)")
    p.add_argument("--camera", required=True, help="camera config file")
    p.add_argument("--method", type=_method, default=_method("ours"),
                   help="ours | bini (default ours)")
    p.add_argument("--variant", choices=("abs", "rel-log", "rel-depth"),
                   default="abs", help="residual flavor (default abs)")
    p.add_argument("--report", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_residuals)

    p = sub.add_parser("noise", help="corrupt a normal map (and optionally filter)")
    p.add_argument("--normals", required=True, help="normal map (.pfm)")
    p.add_argument("--mode", required=True, type=_noise_spec,
                   help="outliers:FRACTION | rot:SIGMA_DEG")
    p.add_argument("--seed", required=True, type=_seed, help="RNG seed (u64)")
    p.add_argument("--filter", action="store_true",
                   help="apply the outlier mitigation filter after corrupting")
    p.add_argument("--camera", default=None,
                   help="camera config file (required with --filter)")
    p.add_argument("--out", required=True, help="output normal map (.pfm)")
    p.set_defaults(func=_cmd_noise)

    p = sub.add_parser("ablate", help="run a hyperparameter sweep grid")
    p.add_argument("--suite", required=True,
                   choices=("gamma", "lambda", "beta", "connectivity"))
    p.add_argument("--base", required=True,
                   help="directory produced by `nint synth`")
    p.add_argument("--report", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv=None) -> int:
    try:
        _configure_threads()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser = build_parser()
    args = parser.parse_args(argv)

    from .errors import NintError

    try:
        return args.func(args)
    except (NintError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
