"""Normal-map corruption and the n·tau-based mitigation filter.

Two corruption models: ``Outliers`` replaces a fraction of masked normals
with isotropically uniform unit vectors (normalized 3D Gaussian draws),
``Rotational`` perturbs every masked normal by a rotation around a uniform
random axis with Gaussian-distributed angle.  Both are driven by a seeded
PCG64 generator, so a spec is a complete, reproducible description of the
corruption.

:func:`mitigation_filter` exploits that a genuine visible surface must have
``n . tau < 0``: pixels violating it, or whose |n . tau| deviates strongly
from the neighborhood, are replaced by an average of trustworthy neighbors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Outliers:
    """Replace ``fraction`` of the masked normals with random unit vectors."""

    fraction: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.fraction <= 1.0):
            raise ValueError(f"outlier fraction must lie in [0, 1], got {self.fraction}")


@dataclass(frozen=True)
class Rotational:
    """Rotate every masked normal by an angle ~ N(0, sigma_deg^2), random axis."""

    sigma_deg: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma_deg < 0:
            raise ValueError(f"rotation sigma must be >= 0, got {self.sigma_deg}")


NoiseSpec = Outliers | Rotational


def _unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    """Isotropically uniform unit vectors; redraws the (measure-zero) null draws."""
    vecs = rng.standard_normal((n, 3))
    norms = np.linalg.norm(vecs, axis=1)
    while np.any(norms < 1e-12):
        bad = norms < 1e-12
        vecs[bad] = rng.standard_normal((int(bad.sum()), 3))
        norms = np.linalg.norm(vecs, axis=1)
    return vecs / norms[:, None]


def corrupt(normals: np.ndarray, mask: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Corrupted copy of a normal map; only masked pixels change.

    Deterministic per ``spec.seed`` (PCG64); masked pixels are indexed in
    row-major order, so identical inputs give bit-identical outputs.
    """
    if not isinstance(spec, (Outliers, Rotational)):
        raise TypeError(f"not a noise spec: {spec!r}")
    normals = np.array(normals, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    flat = normals.reshape(-1, 3)
    masked = np.nonzero(mask.ravel())[0]
    rng = np.random.Generator(np.random.PCG64(spec.seed))

    if isinstance(spec, Outliers):
        n_pick = int(np.floor(spec.fraction * masked.size))
        if n_pick:
            pick = rng.choice(masked.size, size=n_pick, replace=False)
            flat[masked[pick]] = _unit_vectors(rng, n_pick)
    else:
        angles = rng.normal(0.0, np.deg2rad(spec.sigma_deg), masked.size)
        axes = _unit_vectors(rng, masked.size)
        n = flat[masked]
        cos = np.cos(angles)[:, None]
        sin = np.sin(angles)[:, None]
        axis_dot_n = np.einsum("ij,ij->i", axes, n)[:, None]
        flat[masked] = n * cos + np.cross(axes, n) * sin + axes * axis_dot_n * (1.0 - cos)
    return normals


def _shift(arr: np.ndarray, dv: int, du: int) -> np.ndarray:
    """``out[v, u] = arr[v + dv, u + du]``, zero-filled at the border."""
    out = np.zeros_like(arr)
    h, w = arr.shape[:2]
    vs = slice(max(0, dv), h + min(0, dv))
    us = slice(max(0, du), w + min(0, du))
    vd = slice(max(0, -dv), h + min(0, -dv))
    ud = slice(max(0, -du), w + min(0, -du))
    out[vd, ud] = arr[vs, us]
    return out


def mitigation_filter(
    normals: np.ndarray,
    rays: np.ndarray,
    mask: np.ndarray,
    deviation_threshold: float = 0.75,
    window: int = 3,
) -> np.ndarray:
    """Detect and repair corrupted normals via the visibility condition.

    Two detection stages over masked pixels: (1) ``n . tau > 0`` is
    physically impossible for a visible surface; (2) ``|n . tau|`` deviating
    from the mean over the stage-1-clean masked window neighbors by more
    than ``deviation_threshold`` (relative).  Flagged normals are replaced
    by the normalized average of unflagged masked neighbors -- restricted to
    neighbors with ``n_i . tau_center < 0`` so the replacement provably
    satisfies the visibility condition itself.  Single pass over a read-only
    source; flagged pixels with no usable neighbor are left unchanged and
    logged.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be an odd size >= 3, got {window}")
    if deviation_threshold <= 0:
        raise ValueError(f"deviation threshold must be positive, got {deviation_threshold}")
    normals = np.asarray(normals, dtype=np.float64)
    rays = np.asarray(rays, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)

    dots = np.einsum("hwi,hwi->hw", normals, rays)
    stage1 = mask & (dots > 0)
    clean = mask & ~stage1

    radius = window // 2
    offsets = [
        (dv, du)
        for dv in range(-radius, radius + 1)
        for du in range(-radius, radius + 1)
        if (dv, du) != (0, 0)
    ]

    abs_dots = np.where(clean, np.abs(dots), 0.0)
    mu_sum = np.zeros(mask.shape)
    mu_cnt = np.zeros(mask.shape)
    for dv, du in offsets:
        mu_sum += _shift(abs_dots, dv, du)
        mu_cnt += _shift(clean.astype(np.float64), dv, du)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(mu_cnt > 0, mu_sum / mu_cnt, 0.0)
        rel_dev = np.where(mu > 0, np.abs(np.abs(dots) - mu) / mu, 0.0)
    stage2 = clean & (mu > 0) & (rel_dev > deviation_threshold)
    flagged = stage1 | stage2

    trusted = mask & ~flagged
    trusted_normals = np.where(trusted[..., None], normals, 0.0)
    rep_sum = np.zeros(normals.shape)
    rep_cnt = np.zeros(mask.shape)
    for dv, du in offsets:
        neighbor = _shift(trusted_normals, dv, du)
        usable = _shift(trusted.astype(np.float64), dv, du) > 0
        usable &= np.einsum("hwi,hwi->hw", neighbor, rays) < 0
        rep_sum += np.where(usable[..., None], neighbor, 0.0)
        rep_cnt += usable

    rep_norm = np.linalg.norm(rep_sum, axis=-1)
    repairable = flagged & (rep_cnt > 0) & (rep_norm > 1e-12)
    out = normals.copy()
    out[repairable] = rep_sum[repairable] / rep_norm[repairable, None]
    unrepaired = int(np.count_nonzero(flagged & ~repairable))
    if unrepaired:
        logger.warning(
            "%d flagged normal(s) had no usable neighbors and were left unchanged",
            unrepaired,
        )
    return out
