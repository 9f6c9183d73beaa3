"""Directed pixel-pair graph over a masked normal map.

Pixels are addressed as (u, v) = (column, row) with flat index ``v * W + u``.
A directed pair ``p`` relates a center pixel ``a_p`` to one neighbor ``b_p``
(the offset ``(du, dv) = (u_b - u_a, v_b - v_a)``) and carries everything the
optimizer needs about that link: the mid-ray interpolation, the closed-form
depth-relation coefficients, the weighting factor gamma and the finite
log-depth difference used by the gradient-style baseline.

Pairs are enumerated row-major by center pixel, then by offset order, so the
graph layout is reproducible.  For every kept pair the graph also stores

* ``reverse[p]`` -- the index of the same unordered pair traversed the other
  way (always present: drops are applied to unordered pairs), and
* ``opposite[p]`` -- the index of the pair from the same center to the
  mirrored neighbor ``a - (du, dv)``, or -1 at the mask/image boundary.

The mid ray of an unordered pair is computed once, in the canonical
direction (smaller flat index first), and copied bitwise to the reverse
pair, which makes the lambda reciprocity ``lambda_rev = 1 - lambda`` and the
shared tau_m exact rather than merely of rounding-error size.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DimensionMismatch, EmptyGraph, EmptyMask, NonUnitNormals
from .formulation import (
    DEGENERATE_DOT,
    GammaMode,
    LambdaMode,
    PairCoefficients,
    interp_lambda,
    interp_tau_m,
)

logger = logging.getLogger(__name__)

#: Masked normals may deviate from unit length by at most this much.
UNIT_NORM_TOL = 1e-2

#: Axis-aligned offsets (du, dv): right, left, down, up.
FOUR_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1))
#: Diagonal offsets: down-right, up-left, up-right, down-left.
DIAGONAL_OFFSETS = ((1, 1), (-1, -1), (1, -1), (-1, 1))
EIGHT_OFFSETS = FOUR_OFFSETS + DIAGONAL_OFFSETS

#: Human-readable name of each offset, used for per-direction map files.
OFFSET_NAMES = {
    (1, 0): "right",
    (-1, 0): "left",
    (0, 1): "down",
    (0, -1): "up",
    (1, 1): "downright",
    (-1, -1): "upleft",
    (1, -1): "upright",
    (-1, 1): "downleft",
}


class Connectivity(Enum):
    """Neighborhood structure of the pair graph."""

    FOUR = "4"
    DIAGONAL_FOUR = "diag4"
    EIGHT = "8"

    @property
    def offsets(self) -> tuple[tuple[int, int], ...]:
        return _OFFSETS[self]

    @classmethod
    def parse(cls, text: str) -> "Connectivity":
        for member in cls:
            if member.value == text:
                return member
        choices = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown connectivity {text!r}; expected one of: {choices}")


_OFFSETS = {
    Connectivity.FOUR: FOUR_OFFSETS,
    Connectivity.DIAGONAL_FOUR: DIAGONAL_OFFSETS,
    Connectivity.EIGHT: EIGHT_OFFSETS,
}


@dataclass
class PairGraph:
    """All per-pair quantities of a masked normal map (see module docstring).

    Index arrays ``a``/``b`` hold flat pixel indices; ``a_sub``/``b_sub``
    hold positions in the masked-pixel subspace (the optimizer's unknown
    vector), i.e. ``a_sub = pixel_index.flat[a]``.
    """

    height: int
    width: int
    connectivity: Connectivity
    lambda_mode: LambdaMode
    gamma_mode: GammaMode
    mask: np.ndarray  # (H, W) bool
    pixels: np.ndarray  # (N,) flat indices of masked pixels, row-major
    pixel_index: np.ndarray  # (H, W) int, position in `pixels` or -1
    a: np.ndarray  # (P,) flat center pixel
    b: np.ndarray  # (P,) flat neighbor pixel
    a_sub: np.ndarray  # (P,) center in masked subspace
    b_sub: np.ndarray  # (P,) neighbor in masked subspace
    k: np.ndarray  # (P,) offset index into connectivity.offsets
    du: np.ndarray  # (P,) u_b - u_a
    dv: np.ndarray  # (P,) v_b - v_a
    reverse: np.ndarray  # (P,) index of pair (b, a)
    opposite: np.ndarray  # (P,) index of pair (a, a - offset) or -1
    lam: np.ndarray  # (P,) mid-ray interpolation parameter
    tau_m: np.ndarray  # (P, 3) mid ray, shared bitwise with the reverse pair
    coeffs: PairCoefficients  # closed-form relation, gamma attached
    log_omega: np.ndarray  # (P,) log of the smooth-surface depth ratio
    bini_rhs: np.ndarray  # (P,) finite log-depth difference from the normal at a
    components: np.ndarray  # (H, W) connected-component label, -1 off mask
    n_components: int
    n_dropped_pairs: int  # unordered pairs removed as degenerate/inconsistent
    _design: sp.csr_matrix | None = None

    @property
    def n_pixels(self) -> int:
        return int(self.pixels.size)

    @property
    def n_pairs(self) -> int:
        return int(self.a.size)

    def offset_name(self, k: int) -> str:
        return OFFSET_NAMES[self.connectivity.offsets[k]]

    def design_matrix(self) -> sp.csr_matrix:
        """Sparse (n_pairs, n_pixels) matrix with row p = gamma_p (e_a - e_b).

        Rows sum to zero, so constant vectors per connected component span
        the nullspace.  Built lazily and cached; rows follow the fixed pair
        order and each holds exactly two entries.
        """
        if self._design is None:
            p = self.n_pairs
            rows = np.repeat(np.arange(p), 2)
            cols = np.stack([self.a_sub, self.b_sub], axis=1).ravel()
            gamma = self.coeffs.gamma
            data = np.stack([gamma, -gamma], axis=1).ravel()
            self._design = sp.csr_matrix(
                (data, (rows, cols)), shape=(p, self.n_pixels)
            )
        return self._design


def build_graph(
    normals: np.ndarray,
    mask: np.ndarray,
    rays: np.ndarray,
    connectivity: Connectivity = Connectivity.FOUR,
    lambda_mode: LambdaMode = LambdaMode(),
    gamma_mode: GammaMode = GammaMode(),
) -> PairGraph:
    """Build the directed pair graph for a normal map under a ray map.

    Unordered pairs whose geometry the camera could not have produced
    (``n . tau >= 0`` on either side, or a negative depth ratio) and pairs
    with numerically degenerate denominators are dropped symmetrically with
    a logged count, so ``reverse`` is total on the kept pairs.

    Raises :class:`EmptyMask` when no pixel is valid, :class:`EmptyGraph`
    when no pair survives, :class:`NonUnitNormals` for masked normals that
    are not unit length (read maps through the io module, which renormalizes
    quantization-level deviations), and :class:`DimensionMismatch` for
    inconsistent array shapes.
    """
    normals = np.asarray(normals, dtype=np.float64)
    rays = np.asarray(rays, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if normals.ndim != 3 or normals.shape[2] != 3:
        raise DimensionMismatch(f"normal map must have shape (H, W, 3), got {normals.shape}")
    if rays.shape != normals.shape:
        raise DimensionMismatch(
            f"ray map shape {rays.shape} does not match normal map {normals.shape}"
        )
    if mask.shape != normals.shape[:2]:
        raise DimensionMismatch(
            f"mask shape {mask.shape} does not match normal map {normals.shape[:2]}"
        )
    height, width = mask.shape
    if not mask.any():
        raise EmptyMask("mask contains no valid pixels")

    deviation = np.abs(np.linalg.norm(normals, axis=2)[mask] - 1.0)
    n_bad = int(np.count_nonzero(deviation > UNIT_NORM_TOL))
    if n_bad:
        raise NonUnitNormals(
            f"{n_bad} masked normal(s) deviate from unit length by more than "
            f"{UNIT_NORM_TOL:g} (max deviation {float(deviation.max()):.3g})"
        )

    offsets = connectivity.offsets
    n_offsets = len(offsets)

    # Candidate directed pairs: both pixels masked, neighbor in bounds.
    vv, uu = np.nonzero(mask)
    a_parts: list[np.ndarray] = []
    b_parts: list[np.ndarray] = []
    k_parts: list[np.ndarray] = []
    for k, (du_k, dv_k) in enumerate(offsets):
        ub = uu + du_k
        vb = vv + dv_k
        ok = (ub >= 0) & (ub < width) & (vb >= 0) & (vb < height)
        ok[ok] = mask[vb[ok], ub[ok]]
        a_parts.append(vv[ok] * width + uu[ok])
        b_parts.append(vb[ok] * width + ub[ok])
        k_parts.append(np.full(int(np.count_nonzero(ok)), k, dtype=np.int64))
    a = np.concatenate(a_parts)
    b = np.concatenate(b_parts)
    k_idx = np.concatenate(k_parts)
    if a.size == 0:
        raise EmptyGraph("mask contains no neighboring pixel pairs")

    # Row-major by center pixel, then offset order.
    order = np.argsort(a * n_offsets + k_idx)
    a, b, k_idx = a[order], b[order], k_idx[order]

    n_flat = normals.reshape(-1, 3)
    tau_flat = rays.reshape(-1, 3)
    n_a, n_b = n_flat[a], n_flat[b]
    tau_a, tau_b = tau_flat[a], tau_flat[b]

    reverse = _reverse_index(a, b, height * width)

    # Mid ray once per unordered pair, copied to the reverse direction.
    lam = np.empty(a.size, dtype=np.float64)
    tau_m = np.empty((a.size, 3), dtype=np.float64)
    canon = a < b
    lam_canon = interp_lambda(n_a[canon], tau_a[canon], n_b[canon], tau_b[canon], lambda_mode)
    lam[canon] = lam_canon
    tau_m[canon] = interp_tau_m(tau_a[canon], tau_b[canon], lam_canon)
    rev_canon = reverse[canon]
    lam[rev_canon] = 1.0 - lam_canon
    tau_m[rev_canon] = tau_m[canon]

    nta = np.einsum("ij,ij->i", n_a, tau_a)
    ntb = np.einsum("ij,ij->i", n_b, tau_b)
    ntma = np.einsum("ij,ij->i", n_a, tau_m)
    ntmb = np.einsum("ij,ij->i", n_b, tau_m)
    dtau = np.linalg.norm(tau_b - tau_a, axis=1)

    degenerate = (
        (np.abs(nta) < DEGENERATE_DOT)
        | (np.abs(ntmb) < DEGENERATE_DOT)
        | (dtau < DEGENERATE_DOT)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = np.where(degenerate, np.nan, (ntma * ntb) / (nta * ntmb))
    # NaN compares false, so degenerate pairs land in ~valid as well.
    valid = (nta < 0.0) & (ntb < 0.0) & (omega > 0.0)
    drop = degenerate | ~valid
    drop |= drop[reverse]
    n_dropped = int(np.count_nonzero(drop)) // 2
    if n_dropped:
        logger.warning(
            "dropping %d pixel pair(s) with degenerate or camera-inconsistent geometry",
            n_dropped,
        )

    keep = ~drop
    a, b, k_idx = a[keep], b[keep], k_idx[keep]
    if a.size == 0:
        raise EmptyGraph(f"all {n_dropped} pixel pairs were dropped as unusable")
    n_a, n_b, tau_a, tau_b = n_a[keep], n_b[keep], tau_a[keep], tau_b[keep]
    lam, tau_m = lam[keep], tau_m[keep]
    nta, ntb, ntma, ntmb = nta[keep], ntb[keep], ntma[keep], ntmb[keep]
    omega, dtau = omega[keep], dtau[keep]

    # Filtering preserves order, so the (a, k) key is still sorted.
    reverse = _reverse_index(a, b, height * width)
    opposite = _opposite_index(a, k_idx, offsets)

    coeffs = PairCoefficients(
        omega_eps=n_a[:, 2] / nta,
        omega=omega,
        valid=np.ones(a.size, dtype=bool),
        n_dot_tau_a=nta,
        n_dot_tau_b=ntb,
        n_dot_tau_m_a=ntma,
        n_dot_tau_m_b=ntmb,
    )

    du = (b % width) - (a % width)
    dv = (b // width) - (a // width)
    gamma_full = (np.hypot(du, dv) / dtau) * nta
    if gamma_mode.kind == "full":
        gamma = gamma_full
    elif gamma_mode.kind == "no_f":
        gamma = nta.copy()
    elif gamma_mode.kind == "const_f":
        gamma = gamma_mode.value * nta
    else:  # no_ndott
        gamma = np.hypot(du, dv) / dtau
    coeffs.gamma = gamma

    log_omega = np.log(omega)
    bini_rhs = (du * n_a[:, 0] + dv * n_a[:, 1]) / gamma_full

    pixels = np.nonzero(mask.ravel())[0]
    pixel_index = np.full(height * width, -1, dtype=np.int64)
    pixel_index[pixels] = np.arange(pixels.size)
    a_sub = pixel_index[a]
    b_sub = pixel_index[b]

    adjacency = sp.csr_matrix(
        (np.ones(a.size, dtype=np.int8), (a_sub, b_sub)),
        shape=(pixels.size, pixels.size),
    )
    n_components, labels = connected_components(adjacency, directed=False)
    components = np.full(height * width, -1, dtype=np.int32)
    components[pixels] = labels

    return PairGraph(
        height=height,
        width=width,
        connectivity=connectivity,
        lambda_mode=lambda_mode,
        gamma_mode=gamma_mode,
        mask=mask,
        pixels=pixels,
        pixel_index=pixel_index.reshape(height, width),
        a=a,
        b=b,
        a_sub=a_sub,
        b_sub=b_sub,
        k=k_idx,
        du=du,
        dv=dv,
        reverse=reverse,
        opposite=opposite,
        lam=lam,
        tau_m=tau_m,
        coeffs=coeffs,
        log_omega=log_omega,
        bini_rhs=bini_rhs,
        components=components.reshape(height, width),
        n_components=int(n_components),
        n_dropped_pairs=n_dropped,
    )


def _reverse_index(a: np.ndarray, b: np.ndarray, n_flat: int) -> np.ndarray:
    """Index of pair (b, a) for each pair (a, b); total by symmetric drops."""
    key = a * n_flat + b
    order = np.argsort(key)
    pos = np.searchsorted(key[order], b * n_flat + a)
    reverse = order[pos]
    assert np.array_equal(a[reverse], b), "pair graph lost reverse closure"
    return reverse


def _opposite_index(
    a: np.ndarray, k_idx: np.ndarray, offsets: tuple[tuple[int, int], ...]
) -> np.ndarray:
    """Index of the mirrored-offset pair at the same center, or -1."""
    opp_k = np.array([offsets.index((-du, -dv)) for du, dv in offsets], dtype=np.int64)
    key = a * len(offsets) + k_idx  # enumeration order == sorted by this key
    want = a * len(offsets) + opp_k[k_idx]
    pos = np.searchsorted(key, want)
    pos_c = np.minimum(pos, key.size - 1)
    return np.where(key[pos_c] == want, pos_c, -1)
