"""Iterative discontinuity-aware integration of a normal map into depth.

The optimization works on log depth z̃ over the masked pixels.  Every outer
iteration re-derives the bilateral weights from the previous solution,
activates the discontinuity term where the weights have committed to a jump,
assembles the weighted least-squares normal equations and advances z̃ with a
warm-started conjugate-gradient solve:

    t = 1 .. T:
      1. res   <- gamma * (z̃_a - z̃_b)           from z̃^(t-1)
      2. w^(t) <- sigmoid_k(res_opp^2 - res^2)    (0.5 without an opposite)
      3. beta^(t) <- activation(w^(t-1))          (0 at t=1: no w^(0))
      4. M, r  <- normal equations with current alpha, beta^(t), w^(t)
      5. z̃^(t) <- CG(M, r, x0 = z̃^(t-1))
      6. alpha <- (exp(z̃_a - z̃_b) - omega) / omega_eps   (if enabled)

Absolute scale is unobservable (every row relates two pixels), so z̃ floats
in a per-component gauge.  Starting CG from z̃ = 0 keeps the per-component
mean of z̃ at zero throughout: with rows summing to zero, every Krylov
direction is orthogonal to the per-component constants, which is why the
solver runs plain (unpreconditioned) CG on purpose.  Use
:func:`gauge_align` to place a reconstruction onto a reference.

In ``bini`` mode the right-hand side is the finite log-depth difference
predicted directly by the normal at the center pixel and the alpha/beta
machinery stays off; everything else (weights, gamma, CG) is shared.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .camera import CameraModel
from .errors import DimensionMismatch, EmptyMask
from .formulation import (
    ALPHA_ELIGIBLE_OMEGA_EPS,
    BetaParams,
    GammaMode,
    LambdaMode,
    beta_activation,
    log_rhs,
    logistic,
)
from .graph import Connectivity, PairGraph, build_graph

logger = logging.getLogger(__name__)

_EPS = float(np.finfo(np.float64).eps)

#: CG abandons a search direction whose curvature is below this times
#: ``max|diag(M)| * |p|^2`` — the direction is in the numerical nullspace.
_CG_BREAKDOWN = 1e-14

#: Bilateral weights below this are flushed to exactly 0 (see
#: :func:`bilateral_weights`).  Deep below machine epsilon: flushing changes
#: the energy by less than one ulp of any other term.
WEIGHT_FLUSH = 1e-30


class Method(Enum):
    """Which per-pair depth relation drives the optimization."""

    OURS = "ours"
    BINI = "bini"

    @classmethod
    def parse(cls, text: str) -> "Method":
        for member in cls:
            if member.value == text:
                return member
        raise ValueError(f"unknown method {text!r}; expected 'ours' or 'bini'")


@dataclass(frozen=True)
class SolverConfig:
    max_outer_iters: int = 1200
    k: float = 2.0  # bilateral sharpness
    beta: BetaParams = BetaParams()
    alpha_enabled: bool = True
    method: Method = Method.OURS
    gamma_mode: GammaMode = GammaMode()
    lambda_mode: LambdaMode = LambdaMode()
    connectivity: Connectivity = Connectivity.FOUR
    cg_tol: float = 1e-9
    cg_max_iters: int = 5000
    early_stop_rel_energy: float | None = 1e-9  # None disables early stopping

    def __post_init__(self) -> None:
        if self.max_outer_iters < 1:
            raise ValueError(f"max_outer_iters must be >= 1, got {self.max_outer_iters}")
        if self.k <= 0:
            raise ValueError(f"bilateral sharpness k must be positive, got {self.k}")
        if self.cg_tol <= 0 or self.cg_max_iters < 1:
            raise ValueError("cg_tol must be positive and cg_max_iters >= 1")
        if self.early_stop_rel_energy is not None and self.early_stop_rel_energy <= 0:
            raise ValueError("early_stop_rel_energy must be positive or None")


@dataclass
class SolverState:
    """Mutable state of the outer loop (see module docstring for timing)."""

    z_tilde: np.ndarray  # (N,) log depth over masked pixels
    alpha: np.ndarray  # (P,) relative discontinuity per directed pair
    w: np.ndarray  # (P,) bilateral weight in [0, 1]
    beta: np.ndarray  # (P,) discontinuity activation in (0, 1)
    t: int = 0
    energy: float = np.inf


@dataclass
class CgResult:
    x: np.ndarray
    iterations: int
    converged: bool
    stagnated: bool = False


@dataclass
class IntegrationResult:
    """Depth reconstruction plus everything worth inspecting about the run."""

    depth: np.ndarray  # (H, W), exp(z̃) on the mask, 0 elsewhere
    z_tilde: np.ndarray  # (N,) over graph.pixels
    epsilon: np.ndarray  # (P,) discontinuity magnitude alpha * z_b [scene units]
    weights: np.ndarray  # (P,) final bilateral weights
    alpha: np.ndarray  # (P,)
    beta: np.ndarray  # (P,)
    graph: PairGraph
    energy_trace: np.ndarray  # objective value per outer iteration
    iterations: int  # outer iterations actually run
    cg_iterations: int  # total inner CG iterations
    cg_stagnations: int  # CG breakdowns (diagnostic, not fatal)
    stopped_early: bool
    notes: list[str] = field(default_factory=list)


def residuals(state: SolverState, graph: PairGraph) -> np.ndarray:
    """Per-pair gamma-scaled log-depth difference ``gamma (z̃_a - z̃_b)``."""
    dz = state.z_tilde[graph.a_sub] - state.z_tilde[graph.b_sub]
    return graph.coeffs.gamma * dz


def bilateral_weights(state: SolverState, graph: PairGraph, k: float = 2.0) -> np.ndarray:
    """One-sided discontinuity weights ``sigmoid_k(res_opp^2 - res^2)``.

    A pair whose residual dwarfs its opposite's gets weight ~0 (the relation
    most likely crosses a jump); symmetric residuals give the undecided 0.5.
    Each weight is computed once per opposite-linked pair and the mirror
    receives the exact complement ``1 - w``, so complementarity holds to
    floating-point addition, not just to sigmoid rounding.  Pairs without an
    opposite (mask/image boundary) stay at the neutral 0.5.

    Saturated weights are flushed to exactly 0 (mirror exactly 1).  Near 1
    the sigmoid already rounds to 1.0 (doubles next to 1 are 1e-16 apart),
    but near 0 it keeps denormal-scale values like 1e-58 alive; those cannot
    carry their pair's equation against the roundoff of everything else, yet
    they leave a near-null normal-matrix mode whose solve amplifies noise
    into inter-region drift.  Exact zeros make the mode exactly null, which
    CG provably never excites, so decoupled regions stay pinned to the warm
    start instead of wandering.
    """
    res = residuals(state, graph)
    w = np.full(graph.n_pairs, 0.5, dtype=np.float64)
    first = (graph.opposite >= 0) & (np.arange(graph.n_pairs) < graph.opposite)
    idx = np.nonzero(first)[0]
    opp = graph.opposite[idx]
    w_idx = logistic(res[opp] ** 2 - res[idx] ** 2, k)
    w_idx[w_idx < WEIGHT_FLUSH] = 0.0
    w[idx] = w_idx
    w[opp] = 1.0 - w_idx
    return w


def alpha_update(state: SolverState, graph: PairGraph) -> np.ndarray:
    """Discontinuity estimate ``alpha = (exp(z̃_a - z̃_b) - omega) / omega_eps``.

    This is the exact minimizer of a pair's residual given the current
    depths; plugged back into the log RHS it yields exp(z̃_a - z̃_b) > 0,
    which is what keeps the log argument positive across iterations.  Pairs
    whose ``|omega_eps|`` is below the eligibility floor keep alpha = 0.
    """
    dz = state.z_tilde[graph.a_sub] - state.z_tilde[graph.b_sub]
    eligible = np.abs(graph.coeffs.omega_eps) >= ALPHA_ELIGIBLE_OMEGA_EPS
    alpha = np.zeros(graph.n_pairs, dtype=np.float64)
    alpha[eligible] = (
        np.exp(dz[eligible]) - graph.coeffs.omega[eligible]
    ) / graph.coeffs.omega_eps[eligible]
    return alpha


def assemble_normal_equations(
    graph: PairGraph, state: SolverState, config: SolverConfig
):
    """Weighted normal equations ``M = A^T W A``, ``r = A^T W b`` (both sparse/dense).

    One row per directed pair: ``gamma (z̃_a - z̃_b) = gamma * rhs`` with
    diagonal weight ``w``; rhs is ``log(omega + omega_eps alpha beta)`` or
    the precomputed finite difference in bini mode.  Returns ``(M, r,
    b_row)`` with ``b_row`` the per-row right-hand side (handy for energy
    evaluation without reassembly).
    """
    if config.method is Method.BINI:
        rhs = graph.bini_rhs
    else:
        rhs = log_rhs(graph.coeffs, state.alpha, state.beta)
    b_row = graph.coeffs.gamma * rhs
    design = graph.design_matrix()
    weighted = design.copy()
    weighted.data = design.data * np.repeat(state.w, 2)
    m = (design.T @ weighted).tocsr()
    r = design.T @ (state.w * b_row)
    return m, r, b_row


def cg_solve(
    m, r: np.ndarray, x0: np.ndarray | None = None, tol: float = 1e-9, max_iters: int = 5000
) -> CgResult:
    """Plain conjugate gradient on a symmetric PSD system.

    Stops once ``|M x - r| <= max(tol |r|, noise floor)``, where the noise
    floor ``eps * max|diag M| * max(|x0|, 1)`` is the roundoff incurred just
    *evaluating* the residual: chasing anything below it replaces
    convergence with a random walk on arithmetic noise (along the nullspace
    it accumulates instead of averaging out, since nothing pulls it back).
    A solve warm-started at a residual already in the noise returns
    immediately and leaves the iterate untouched.

    No preconditioner: for the integration systems the Krylov space is
    orthogonal to the per-component constant nullspace, and preconditioning
    would break that.  A curvature ``p^T M p`` that is non-positive *or*
    numerically zero relative to the matrix scale ends the solve with
    ``stagnated=True``; the current iterate is still usable, and whatever
    lies along such a direction is already fixed by the warm start.
    """
    x = np.zeros(r.shape[0], dtype=np.float64) if x0 is None else x0.astype(np.float64)
    m_scale = float(np.max(np.abs(m.diagonal()))) if r.size else 0.0
    noise_floor = _EPS * max(m_scale, 1.0) * max(float(np.linalg.norm(x)), 1.0)
    target = max(tol * float(np.linalg.norm(r)), noise_floor)
    resid = r - m @ x
    rs = float(resid @ resid)
    if np.sqrt(rs) <= target:
        return CgResult(x=x, iterations=0, converged=True)
    p = resid.copy()
    for it in range(1, max_iters + 1):
        mp = m @ p
        curvature = float(p @ mp)
        if curvature <= _CG_BREAKDOWN * m_scale * float(p @ p):
            logger.debug("cg stagnation at iteration %d (curvature %.3g)", it, curvature)
            return CgResult(x=x, iterations=it, converged=False, stagnated=True)
        step = rs / curvature
        x = x + step * p
        resid = resid - step * mp
        rs_next = float(resid @ resid)
        if np.sqrt(rs_next) <= target:
            return CgResult(x=x, iterations=it, converged=True)
        p = resid + (rs_next / rs) * p
        rs = rs_next
    return CgResult(x=x, iterations=max_iters, converged=False)


def integrate(
    normals: np.ndarray,
    mask: np.ndarray,
    camera: CameraModel | np.ndarray,
    config: SolverConfig = SolverConfig(),
    alpha_fixed: np.ndarray | None = None,
    on_iteration: Callable[[SolverState], None] | None = None,
    graph: PairGraph | None = None,
) -> IntegrationResult:
    """Reconstruct depth from a normal map (see module docstring).

    ``camera`` is a camera model or a precomputed (H, W, 3) ray map.
    ``alpha_fixed`` pins the per-pair discontinuities to known values: the
    activation beta is then held at 1 and the alpha update is skipped, which
    turns the solver into a single reweighted least-squares pass over exact
    jump geometry.  ``on_iteration`` is invoked with the live
    :class:`SolverState` after every outer iteration (before the early-stop
    check); mutate nothing unless you mean to steer the solve.  Passing a
    prebuilt ``graph`` skips the graph construction; it must describe the
    same ``normals``/``mask``/``camera`` and its connectivity and modes win
    over the ones in ``config``.

    Deterministic: identical inputs produce bit-identical results
    (single-threaded assembly and plain CG, no randomness anywhere).
    """
    mask = np.asarray(mask, dtype=bool)
    if graph is None:
        if isinstance(camera, np.ndarray):
            rays = camera
        else:
            rays = camera.ray_map(mask.shape[1], mask.shape[0])
        graph = build_graph(
            normals,
            mask,
            rays,
            connectivity=config.connectivity,
            lambda_mode=config.lambda_mode,
            gamma_mode=config.gamma_mode,
        )
    elif graph.mask.shape != mask.shape:
        raise DimensionMismatch(
            f"prebuilt graph is {graph.mask.shape}, mask is {mask.shape}"
        )

    use_alpha = (
        config.method is Method.OURS and config.alpha_enabled and alpha_fixed is None
    )
    if alpha_fixed is not None:
        alpha0 = np.asarray(alpha_fixed, dtype=np.float64)
        if alpha0.shape != (graph.n_pairs,):
            raise ValueError(
                f"alpha_fixed has shape {alpha0.shape}, expected ({graph.n_pairs},)"
            )
        alpha0 = alpha0.copy()
    else:
        alpha0 = np.zeros(graph.n_pairs, dtype=np.float64)

    state = SolverState(
        z_tilde=np.zeros(graph.n_pixels, dtype=np.float64),
        alpha=alpha0,
        w=np.full(graph.n_pairs, 0.5, dtype=np.float64),
        beta=np.zeros(graph.n_pairs, dtype=np.float64),
    )

    energy_trace: list[float] = []
    cg_total = 0
    cg_stagnations = 0
    stopped_early = False

    for t in range(1, config.max_outer_iters + 1):
        w_prev = state.w
        state.w = bilateral_weights(state, graph, config.k)
        if config.method is Method.OURS:
            if alpha_fixed is not None:
                state.beta = np.ones(graph.n_pairs, dtype=np.float64)
            elif t == 1:
                state.beta = np.zeros(graph.n_pairs, dtype=np.float64)
            else:
                state.beta = beta_activation(w_prev, config.beta)

        m, r, b_row = assemble_normal_equations(graph, state, config)
        cg = cg_solve(m, r, x0=state.z_tilde, tol=config.cg_tol, max_iters=config.cg_max_iters)
        cg_total += cg.iterations
        cg_stagnations += int(cg.stagnated)
        state.z_tilde = cg.x
        state.t = t

        model_res = graph.design_matrix() @ state.z_tilde - b_row
        state.energy = float(np.dot(state.w * model_res, model_res))
        energy_trace.append(state.energy)

        if use_alpha:
            state.alpha = alpha_update(state, graph)

        if on_iteration is not None:
            on_iteration(state)

        if (
            config.early_stop_rel_energy is not None
            and t >= 2
            and abs(energy_trace[-1] - energy_trace[-2])
            <= config.early_stop_rel_energy * max(energy_trace[-2], _EPS)
        ):
            stopped_early = True
            logger.debug("energy stationary at iteration %d; stopping", t)
            break

    trace = np.asarray(energy_trace)
    if trace.size >= 2:
        increased = np.count_nonzero(np.diff(trace) > 0)
        logger.debug(
            "energy non-increasing in %.1f%% of steps",
            100.0 * (1.0 - increased / (trace.size - 1)),
        )

    depth = np.zeros((graph.height, graph.width), dtype=np.float64)
    depth.ravel()[graph.pixels] = np.exp(state.z_tilde)
    epsilon = state.alpha * np.exp(state.z_tilde[graph.b_sub])

    notes = [
        f"gauge: per-component mean log depth held at 0 over "
        f"{graph.n_components} component(s); absolute scale is unobservable"
    ]
    single = int(np.count_nonzero(np.bincount(graph.components[graph.mask]) == 1))
    if single:
        notes.append(f"{single} single-pixel component(s) kept at unit depth")
    if graph.n_dropped_pairs:
        notes.append(f"{graph.n_dropped_pairs} unordered pair(s) dropped at graph build")
    if cg_stagnations:
        notes.append(f"cg stagnated in {cg_stagnations} outer iteration(s)")

    return IntegrationResult(
        depth=depth,
        z_tilde=state.z_tilde,
        epsilon=epsilon,
        weights=state.w,
        alpha=state.alpha,
        beta=state.beta,
        graph=graph,
        energy_trace=trace,
        iterations=state.t,
        cg_iterations=cg_total,
        cg_stagnations=cg_stagnations,
        stopped_early=stopped_early,
        notes=notes,
    )


def gauge_align(
    depth_est: np.ndarray,
    depth_ref: np.ndarray,
    mask: np.ndarray,
    mode: str = "median",
    domain: str = "linear",
    components: np.ndarray | None = None,
) -> np.ndarray:
    """Shift an estimate onto a reference, removing the per-component gauge.

    ``mode`` picks the offset statistic (``median`` is robust to a few wild
    pixels, ``mean`` matches least-squares conventions); ``domain`` applies
    it to raw depth (additive) or log depth (multiplicative).  With a
    ``components`` label map (as produced by the pair graph) each connected
    component is aligned independently; otherwise the masked region is
    treated as one piece.  Returns a new array; unmasked pixels pass through.
    """
    if mode not in ("median", "mean"):
        raise ValueError(f"unknown alignment mode {mode!r}")
    if domain not in ("linear", "log"):
        raise ValueError(f"unknown alignment domain {domain!r}")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("cannot align over an empty mask")
    est = np.array(depth_est, dtype=np.float64)
    ref = np.asarray(depth_ref, dtype=np.float64)
    labels = np.zeros(mask.shape, dtype=np.int32) if components is None else components
    stat = np.median if mode == "median" else np.mean
    for label in np.unique(labels[mask]):
        piece = mask & (labels == label)
        if domain == "linear":
            est[piece] += stat(ref[piece] - est[piece])
        else:
            est[piece] *= np.exp(stat(np.log(ref[piece]) - np.log(est[piece])))
    return est
