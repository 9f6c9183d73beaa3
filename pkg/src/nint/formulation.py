"""Per-pair depth relations for normal integration under a central camera.

For two neighboring pixels ``a`` and ``b`` with unit surface normals
``n_a, n_b`` and rays ``tau_a, tau_b`` the surface points are ``z_a tau_a``
and ``z_b tau_b``.  Assuming each surface patch is locally planar and the two
tangent planes meet a ray ``tau_m`` between the pixels at points separated by
``eps`` along the camera z axis, the depths satisfy the closed form

    z_a = omega_eps_a * eps_{b->a} + omega_{b->a} * z_b

with

    omega_eps_a = n_az / (n_a . tau_a)
    omega_{b->a} = (n_a . tau_m)(n_b . tau_b) / ((n_a . tau_a)(n_b . tau_m))

``eps_{b->a}`` is the depth-discontinuity offset of the pair (0 on a smooth
surface).  :func:`local_plane_oracle` solves the same geometry as an explicit
6x6 linear system and exists so the closed form can be validated against an
independent construction.

The solver works in log depth: with ``alpha_{b->a} = eps_{b->a} / z_b`` and a
per-pair activation ``beta`` the relation becomes

    log z_a - log z_b = log(omega + omega_eps * alpha * beta)

whose argument provably stays positive under the documented update scheme;
:func:`log_rhs` asserts this rather than clamping and counts violations in
:data:`positivity_events`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRay, NonPositiveLogArgument, SingularSystem

#: Denominators (n . tau products) smaller than this are degenerate.
DEGENERATE_DOT = 1e-14

#: Discontinuity coefficients with |omega_eps| below this cannot carry an
#: alpha estimate and are skipped by the update scheme.
ALPHA_ELIGIBLE_OMEGA_EPS = 1e-12


def logistic(x, k: float = 1.0) -> np.ndarray:
    """Numerically safe sigmoid ``1 / (1 + exp(-k x))``.

    The exponent is clamped to +/-500 so extreme inputs saturate to exactly
    0.0 or 1.0 instead of overflowing.
    """
    expo = np.clip(-k * np.asarray(x, dtype=np.float64), -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(expo))


@dataclass
class EventCounter:
    """Process-wide tally for events that should never occur."""

    count: int = 0

    def bump(self, n: int = 1) -> None:
        self.count += int(n)

    def reset(self) -> None:
        self.count = 0


#: Count of non-positive log arguments ever seen by :func:`log_rhs`.
positivity_events = EventCounter()


# ---------------------------------------------------------------------------
# mid-ray interpolation


@dataclass(frozen=True)
class LambdaMode:
    """How the mid ray ``tau_m = tau_a + lambda (tau_b - tau_a)`` is placed.

    ``const`` uses a fixed lambda (0.5 = midpoint, the default).  The sigmoid
    modes shift tau_m toward the more inclined side of the pair, steered by a
    sharpness ``value = k_m``:

    * ``ntau``: lambda = sigmoid_k((n_a.tau_a)^2 - (n_b.tau_b)^2)
    * ``nz``:   lambda = sigmoid_k(n_az^2 - n_bz^2)
    * ``prod``: lambda = sigmoid_k((n_az n_a.tau_a)^2 - (n_bz n_b.tau_b)^2)

    All arguments are antisymmetric under swapping a and b, so
    lambda_{a->b} = 1 - lambda_{b->a} holds by construction; the pair graph
    additionally computes each unordered pair's tau_m exactly once so the
    reciprocity is bitwise.
    """

    kind: str = "const"
    value: float = 0.5

    _KINDS = ("const", "ntau", "nz", "prod")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown lambda mode {self.kind!r}; expected one of {self._KINDS}")
        if self.kind == "const" and not (0.0 <= self.value <= 1.0):
            raise ValueError(f"constant lambda must lie in [0, 1], got {self.value}")
        if self.kind != "const" and self.value <= 0:
            raise ValueError(f"sigmoid sharpness must be positive, got {self.value}")

    @classmethod
    def constant(cls, lam: float = 0.5) -> "LambdaMode":
        return cls("const", lam)

    @classmethod
    def sigmoid_ntau(cls, k_m: float) -> "LambdaMode":
        return cls("ntau", k_m)

    @classmethod
    def sigmoid_nz(cls, k_m: float) -> "LambdaMode":
        return cls("nz", k_m)

    @classmethod
    def sigmoid_product(cls, k_m: float) -> "LambdaMode":
        return cls("prod", k_m)

    @classmethod
    def parse(cls, text: str) -> "LambdaMode":
        """Parse CLI/config syntax: ``const:0.5 | ntau:K | nz:K | prod:K``."""
        kind, sep, value = text.partition(":")
        if not sep:
            raise ValueError(f"lambda mode {text!r} is missing its ':<value>' part")
        try:
            return cls(kind.strip(), float(value))
        except ValueError as exc:
            raise ValueError(f"bad lambda mode {text!r}: {exc}") from None

    def __str__(self) -> str:
        return f"{self.kind}:{self.value:g}"


def interp_lambda(n_a, tau_a, n_b, tau_b, mode: LambdaMode) -> np.ndarray:
    """Interpolation parameter lambda for each pair (see :class:`LambdaMode`)."""
    n_a = np.asarray(n_a, dtype=np.float64)
    n_b = np.asarray(n_b, dtype=np.float64)
    if mode.kind == "const":
        shape = np.broadcast(n_a[..., 0], n_b[..., 0]).shape
        return np.full(shape, mode.value, dtype=np.float64)
    tau_a = np.asarray(tau_a, dtype=np.float64)
    tau_b = np.asarray(tau_b, dtype=np.float64)
    if mode.kind == "ntau":
        arg = np.sum(n_a * tau_a, axis=-1) ** 2 - np.sum(n_b * tau_b, axis=-1) ** 2
    elif mode.kind == "nz":
        arg = n_a[..., 2] ** 2 - n_b[..., 2] ** 2
    else:  # prod
        arg = (n_a[..., 2] * np.sum(n_a * tau_a, axis=-1)) ** 2 - (
            n_b[..., 2] * np.sum(n_b * tau_b, axis=-1)
        ) ** 2
    return logistic(arg, mode.value)


def interp_tau_m(tau_a, tau_b, lam) -> np.ndarray:
    """Mid ray ``tau_a + lambda (tau_b - tau_a)``; z component stays exactly 1."""
    tau_a = np.asarray(tau_a, dtype=np.float64)
    tau_b = np.asarray(tau_b, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)[..., None]
    return tau_a + lam * (tau_b - tau_a)


# ---------------------------------------------------------------------------
# pair coefficients


@dataclass
class PairCoefficients:
    """Closed-form coefficients of ``z_a = omega_eps * eps + omega * z_b``.

    All fields are arrays over the (broadcast) pair dimension.  ``valid``
    marks pairs satisfying the visibility conditions ``n_a.tau_a < 0``,
    ``n_b.tau_b < 0`` and ``omega > 0``; invalid pairs describe geometry the
    camera could not have observed and are excluded from optimization.
    ``gamma`` is the per-pair weighting factor; it is attached by the pair
    graph (it depends on pixel coordinates, not only on rays).
    """

    omega_eps: np.ndarray
    omega: np.ndarray
    valid: np.ndarray
    n_dot_tau_a: np.ndarray
    n_dot_tau_b: np.ndarray
    n_dot_tau_m_a: np.ndarray
    n_dot_tau_m_b: np.ndarray
    gamma: np.ndarray | None = None


def pair_coefficients(n_a, n_b, tau_a, tau_b, tau_m) -> PairCoefficients:
    """Closed-form coefficients for directed pairs ``b -> a``.

    Raises :class:`DegenerateRay` if any divisor ``|n_a . tau_a|`` or
    ``|n_b . tau_m|`` falls below :data:`DEGENERATE_DOT`; batch callers that
    want to drop such pairs instead should pre-filter on the dot products.
    """
    n_a = np.asarray(n_a, dtype=np.float64)
    n_b = np.asarray(n_b, dtype=np.float64)
    tau_a = np.asarray(tau_a, dtype=np.float64)
    tau_b = np.asarray(tau_b, dtype=np.float64)
    tau_m = np.asarray(tau_m, dtype=np.float64)

    nta = np.sum(n_a * tau_a, axis=-1)
    ntb = np.sum(n_b * tau_b, axis=-1)
    ntma = np.sum(n_a * tau_m, axis=-1)
    ntmb = np.sum(n_b * tau_m, axis=-1)

    n_degenerate = int(
        np.count_nonzero(np.abs(nta) < DEGENERATE_DOT)
        + np.count_nonzero(np.abs(ntmb) < DEGENERATE_DOT)
    )
    if n_degenerate:
        raise DegenerateRay(
            f"{n_degenerate} coefficient denominator(s) below {DEGENERATE_DOT:g}"
        )

    omega_eps = n_a[..., 2] / nta
    omega = (ntma * ntb) / (nta * ntmb)
    valid = (nta < 0) & (ntb < 0) & (omega > 0)
    return PairCoefficients(
        omega_eps=omega_eps,
        omega=omega,
        valid=valid,
        n_dot_tau_a=nta,
        n_dot_tau_b=ntb,
        n_dot_tau_m_a=ntma,
        n_dot_tau_m_b=ntmb,
    )


def local_plane_oracle(n_a, n_b, tau_a, tau_b, tau_m, z_b, eps) -> np.ndarray:
    """Brute-force ``z_a`` from the explicit 6x6 local-planarity system.

    Unknowns are the displacements ``d_ma = p_m - p_a`` and ``d_mb = p_m -
    p_b`` of the shared mid-ray point from both surface points (6 scalars).
    Rows: p_m lies on the mid ray (2), both displacements reach the same
    point (2), d_mb lies in b's tangent plane (1), and a's tangent plane is
    met after shifting p_m by eps along +z (1).  Then
    ``z_a = z_b + dz_mb - dz_ma``.

    Deliberately independent of :func:`pair_coefficients` -- no shared
    intermediate quantities -- so the two can cross-check each other.
    """
    n_a = np.asarray(n_a, dtype=np.float64)
    n_b = np.asarray(n_b, dtype=np.float64)
    tau_a = np.asarray(tau_a, dtype=np.float64)
    tau_b = np.asarray(tau_b, dtype=np.float64)
    tau_m = np.asarray(tau_m, dtype=np.float64)
    z_b = np.asarray(z_b, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)

    batch = np.broadcast(n_a[..., 0], n_b[..., 0], z_b, eps).shape
    zeros = np.zeros(batch, dtype=np.float64)
    ones = np.ones(batch, dtype=np.float64)

    def bc(x):
        return np.broadcast_to(x, batch)

    rows = [
        [zeros, zeros, zeros, ones, zeros, -bc(tau_m[..., 0])],
        [zeros, zeros, zeros, zeros, ones, -bc(tau_m[..., 1])],
        [-ones, zeros, bc(tau_a[..., 0]), ones, zeros, -bc(tau_a[..., 0])],
        [zeros, -ones, bc(tau_a[..., 1]), zeros, ones, -bc(tau_a[..., 1])],
        [zeros, zeros, zeros, bc(n_b[..., 0]), bc(n_b[..., 1]), bc(n_b[..., 2])],
        [bc(n_a[..., 0]), bc(n_a[..., 1]), bc(n_a[..., 2]), zeros, zeros, zeros],
    ]
    system = np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)
    rhs = np.stack(
        [
            (bc(tau_m[..., 0]) - bc(tau_b[..., 0])) * z_b,
            (bc(tau_m[..., 1]) - bc(tau_b[..., 1])) * z_b,
            (bc(tau_a[..., 0]) - bc(tau_b[..., 0])) * z_b,
            (bc(tau_a[..., 1]) - bc(tau_b[..., 1])) * z_b,
            zeros,
            -bc(n_a[..., 2]) * eps,
        ],
        axis=-1,
    )
    try:
        sol = np.linalg.solve(system, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"local-plane system is singular: {exc}") from exc
    return z_b + sol[..., 5] - sol[..., 2]


# ---------------------------------------------------------------------------
# log-domain relation


def log_rhs(coeffs: PairCoefficients, alpha, beta) -> np.ndarray:
    """Log-domain right-hand side ``log(omega + omega_eps * alpha * beta)``.

    The argument is positive for every reachable (alpha, beta) of the update
    scheme; a non-positive value indicates a bug or hand-fed inconsistent
    alphas, so it is counted in :data:`positivity_events` and raised as
    :class:`NonPositiveLogArgument`.  No clamping, ever.
    """
    arg = coeffs.omega + coeffs.omega_eps * np.asarray(alpha, dtype=np.float64) * np.asarray(
        beta, dtype=np.float64
    )
    bad = ~(arg > 0)
    if np.any(bad):
        n_bad = int(np.count_nonzero(bad))
        positivity_events.bump(n_bad)
        raise NonPositiveLogArgument(
            f"{n_bad} pair(s) with non-positive log argument "
            f"(min {float(np.min(arg)):.6g} at pair {int(np.argmin(arg))})"
        )
    return np.log(arg)


def alpha_from_depths(z_a, z_b, coeffs: PairCoefficients) -> np.ndarray:
    """Relative discontinuity ``alpha = (z_a / z_b - omega) / omega_eps``.

    Pairs with ``|omega_eps|`` below :data:`ALPHA_ELIGIBLE_OMEGA_EPS` cannot
    express a discontinuity along z and get alpha = 0.
    """
    z_a = np.asarray(z_a, dtype=np.float64)
    z_b = np.asarray(z_b, dtype=np.float64)
    eligible = np.abs(coeffs.omega_eps) >= ALPHA_ELIGIBLE_OMEGA_EPS
    alpha = np.zeros(np.broadcast(z_a, z_b, coeffs.omega).shape, dtype=np.float64)
    ratio = z_a / z_b - coeffs.omega
    np.divide(ratio, coeffs.omega_eps, out=alpha, where=eligible)
    return alpha


# ---------------------------------------------------------------------------
# weighting factor gamma


@dataclass(frozen=True)
class GammaMode:
    """Which form of the per-pair weighting factor gamma to use.

    * ``full`` (default): ``(|u_b - u_a| / |tau_b - tau_a|) * (n_a . tau_a)``
      -- for an ideal pinhole with fx = fy the ratio equals the focal length,
      recovering the classic ``f * n.tau`` factor.
    * ``no_f``: drop the ratio, keep ``n_a . tau_a``.
    * ``const_f``: replace the ratio by a fixed value ``value``.
    * ``no_ndott``: keep only the ratio (ablation; known to degrade badly).
    """

    kind: str = "full"
    value: float = 0.0

    _KINDS = ("full", "no_f", "const_f", "no_ndott")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown gamma mode {self.kind!r}; expected one of {self._KINDS}")
        if self.kind == "const_f" and self.value <= 0:
            raise ValueError(f"const_f gamma needs a positive value, got {self.value}")

    @classmethod
    def full(cls) -> "GammaMode":
        return cls("full")

    @classmethod
    def no_f(cls) -> "GammaMode":
        return cls("no_f")

    @classmethod
    def const_f(cls, value: float) -> "GammaMode":
        return cls("const_f", value)

    @classmethod
    def no_ndott(cls) -> "GammaMode":
        return cls("no_ndott")

    @classmethod
    def parse(cls, text: str) -> "GammaMode":
        """Parse CLI/config syntax: ``full | no_f | const_f:V | no_ndott``."""
        kind, sep, value = text.partition(":")
        kind = kind.strip()
        if kind == "const_f":
            if not sep:
                raise ValueError("const_f gamma mode needs a value, e.g. const_f:2000")
            return cls(kind, float(value))
        if sep:
            raise ValueError(f"gamma mode {kind!r} takes no value")
        return cls(kind)

    def __str__(self) -> str:
        return f"{self.kind}:{self.value:g}" if self.kind == "const_f" else self.kind


def gamma_factor(n_a, tau_a, u_a, u_b, tau_b, mode: GammaMode) -> np.ndarray:
    """Per-pair weighting factor gamma (see :class:`GammaMode`).

    ``u_a, u_b`` are pixel coordinates with shape ``(..., 2)``.  Raises
    :class:`DegenerateRay` when the ray difference underflows and the mode
    needs the pixel-to-ray ratio.
    """
    n_a = np.asarray(n_a, dtype=np.float64)
    tau_a = np.asarray(tau_a, dtype=np.float64)
    nta = np.sum(n_a * tau_a, axis=-1)
    if mode.kind == "no_f":
        return nta
    if mode.kind == "const_f":
        return mode.value * nta
    u_a = np.asarray(u_a, dtype=np.float64)
    u_b = np.asarray(u_b, dtype=np.float64)
    tau_b = np.asarray(tau_b, dtype=np.float64)
    dtau = np.linalg.norm(tau_b - tau_a, axis=-1)
    if np.any(dtau < DEGENERATE_DOT):
        raise DegenerateRay("coincident rays: |tau_b - tau_a| is numerically zero")
    ratio = np.linalg.norm(u_b - u_a, axis=-1) / dtau
    if mode.kind == "no_ndott":
        return ratio
    return ratio * nta


# ---------------------------------------------------------------------------
# discontinuity activation


@dataclass(frozen=True)
class BetaParams:
    """Activation ``beta = sigmoid(q * (rho - w))`` of the discontinuity term.

    With the defaults q=50, rho=0.25 the activation is ~1 once a pair's
    bilateral weight has collapsed toward 0 (confident discontinuity) and ~0
    while the weight sits near the undecided 0.5.
    """

    q: float = 50.0
    rho: float = 0.25

    def __post_init__(self) -> None:
        if self.q <= 0:
            raise ValueError(f"activation sharpness q must be positive, got {self.q}")
        if not (0.0 <= self.rho <= 1.0):
            raise ValueError(f"activation pivot rho must lie in [0, 1], got {self.rho}")


def beta_activation(w_prev, params: BetaParams = BetaParams()) -> np.ndarray:
    """Discontinuity activation from the previous iteration's weights."""
    return logistic(params.q * (params.rho - np.asarray(w_prev, dtype=np.float64)))
