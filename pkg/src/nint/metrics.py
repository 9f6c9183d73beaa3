"""Depth-accuracy and formulation-residual metrics.

Depth metrics compare a reconstruction against ground truth after removing
the unobservable gauge (see :func:`nint.solver.gauge_align`):

* MADE -- mean absolute depth error over the mask,
* RE   -- mean of per-pixel |error| / gt, in percent,
* ERA  -- mean |error| relative to the average gt depth, in percent.

Formulation residuals measure how well a depth-from-normals relation is
satisfied by the *ground-truth* depth, i.e. the model error of the pair
relation itself, independent of any optimization.  The discontinuity terms
are held at zero so both relation variants are compared on equal footing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel
from .errors import EmptyMask
from .graph import PairGraph, build_graph
from .solver import Method, gauge_align

logger = logging.getLogger(__name__)

#: Pairs whose |log z_a| falls below this are excluded from rel_log residuals.
REL_LOG_GUARD = 1e-12

RESIDUAL_VARIANTS = ("abs", "rel_log", "rel_depth")


@dataclass
class MetricsReport:
    """Evaluation summary; the alignment note records how the gauge was fixed."""

    made: float
    re_percent: float
    era_percent: float
    alignment: str
    pixel_count: int
    residual_mean: dict[str, float] = field(default_factory=dict)
    residual_std: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = [self.made, self.re_percent, self.era_percent]
        values += list(self.residual_mean.values()) + list(self.residual_std.values())
        if not all(np.isfinite(v) and v >= 0 for v in values):
            raise ValueError(f"metrics must be finite and non-negative, got {self}")


def _aligned(est, gt, mask, align, domain, components):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("cannot evaluate metrics over an empty mask")
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if align is not None:
        est = gauge_align(est, gt, mask, mode=align, domain=domain, components=components)
    return est, gt, mask


def made(
    est: np.ndarray,
    gt: np.ndarray,
    mask: np.ndarray,
    align: str | None = "median",
    domain: str = "linear",
    components: np.ndarray | None = None,
) -> float:
    """Mean absolute depth error after gauge alignment (``align=None`` skips it)."""
    est, gt, mask = _aligned(est, gt, mask, align, domain, components)
    return float(np.mean(np.abs(est[mask] - gt[mask])))


def relative_errors(
    est: np.ndarray,
    gt: np.ndarray,
    mask: np.ndarray,
    align: str | None = "median",
    domain: str = "linear",
    components: np.ndarray | None = None,
) -> tuple[float, float]:
    """(RE, ERA) in percent: per-pixel relative error and error over mean depth."""
    est, gt, mask = _aligned(est, gt, mask, align, domain, components)
    err = np.abs(est[mask] - gt[mask])
    re = 100.0 * float(np.mean(err / gt[mask]))
    era = 100.0 * float(np.mean(err) / np.mean(gt[mask]))
    return re, era


def evaluate(
    est: np.ndarray,
    gt: np.ndarray,
    mask: np.ndarray,
    align: str | None = "median",
    domain: str = "linear",
    components: np.ndarray | None = None,
) -> MetricsReport:
    """MADE / RE / ERA in one report (residual stats are filled in separately)."""
    mask = np.asarray(mask, dtype=bool)
    re, era = relative_errors(est, gt, mask, align, domain, components)
    return MetricsReport(
        made=made(est, gt, mask, align, domain, components),
        re_percent=re,
        era_percent=era,
        alignment=f"{align}:{domain}" if align is not None else "none",
        pixel_count=int(np.count_nonzero(mask)),
    )


def formulation_residuals(
    normals: np.ndarray,
    depth_gt: np.ndarray,
    camera: CameraModel | np.ndarray,
    graph: PairGraph | None = None,
    method: Method = Method.OURS,
    variant: str = "abs",
) -> tuple[float, float]:
    """(mean, std) of the pair-relation residual at ground-truth depth.

    Per directed pair, with z̃ = log z and rhs the relation's predicted
    log-depth difference (discontinuity terms at 0):

    * ``abs``:       |gamma (z̃_a - z̃_b) - gamma rhs|
    * ``rel_log``:   |(z̃_a - z̃_b - rhs) / z̃_a|, pairs with z̃_a ~ 0
      excluded (and counted in the log) since the ratio is undefined there
    * ``rel_depth``: |(z_a - exp(rhs) z_b) / z_a|

    When ``graph`` is omitted it is built over the pixels where the depth is
    positive and the normal nonzero.
    """
    if variant not in RESIDUAL_VARIANTS:
        raise ValueError(f"unknown residual variant {variant!r}; expected {RESIDUAL_VARIANTS}")
    depth_gt = np.asarray(depth_gt, dtype=np.float64)
    if graph is None:
        normals = np.asarray(normals, dtype=np.float64)
        mask = (depth_gt > 0) & (np.linalg.norm(normals, axis=-1) > 0)
        rays = camera if isinstance(camera, np.ndarray) else camera.ray_map(
            mask.shape[1], mask.shape[0]
        )
        graph = build_graph(normals, mask, rays)

    z_flat = depth_gt.ravel()
    zt_a = np.log(z_flat[graph.a])
    zt_b = np.log(z_flat[graph.b])
    rhs = graph.log_omega if method is Method.OURS else graph.bini_rhs

    if variant == "abs":
        res = np.abs(graph.coeffs.gamma * (zt_a - zt_b - rhs))
    elif variant == "rel_log":
        keep = np.abs(zt_a) >= REL_LOG_GUARD
        n_excluded = int(np.count_nonzero(~keep))
        if n_excluded:
            logger.info(
                "rel_log residual: excluded %d pair(s) with |log z_a| < %g",
                n_excluded,
                REL_LOG_GUARD,
            )
        if not np.any(keep):
            raise EmptyMask("all pairs have log z_a ~ 0; rel_log residual is undefined")
        res = np.abs((zt_a[keep] - zt_b[keep] - rhs[keep]) / zt_a[keep])
    else:  # rel_depth
        res = np.abs((z_flat[graph.a] - np.exp(rhs) * z_flat[graph.b]) / z_flat[graph.a])
    return float(np.mean(res)), float(np.std(res))
