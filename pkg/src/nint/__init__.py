"""Discontinuity-aware integration of surface-normal maps into depth.

The package reconstructs a depth map from per-pixel unit normals under any
central camera (pinhole, distorted pinhole, or a tabulated per-pixel ray
map), estimating depth discontinuities explicitly instead of smoothing over
them.  See :mod:`nint.solver` for the optimization loop, :mod:`nint.synth`
for closed-form test scenes and :mod:`nint.cli` for the command-line front
end (``nint --help``).
"""

from __future__ import annotations

from .camera import BrownConradyPinhole, CameraModel, IdealPinhole, TabulatedRays
from .errors import (
    ConfigError,
    DegenerateRay,
    DimensionMismatch,
    EmptyGraph,
    EmptyMask,
    MalformedHeader,
    MapIoError,
    NintError,
    NonConvergentRoot,
    NonConvergentUndistortion,
    NonPositiveLogArgument,
    NonUnitNormals,
    OutOfBounds,
    SingularSystem,
)
from .formulation import (
    BetaParams,
    GammaMode,
    LambdaMode,
    PairCoefficients,
    alpha_from_depths,
    beta_activation,
    gamma_factor,
    interp_lambda,
    interp_tau_m,
    local_plane_oracle,
    log_rhs,
    logistic,
    pair_coefficients,
)
from .graph import Connectivity, PairGraph, build_graph
from .metrics import MetricsReport, evaluate, formulation_residuals, made
from .noise import Outliers, Rotational, corrupt, mitigation_filter
from .solver import (
    IntegrationResult,
    Method,
    SolverConfig,
    gauge_align,
    integrate,
)
from .synth import (
    Plane,
    Scene,
    SphereCap,
    StepPlanes,
    Wave,
    ground_truth_alpha,
    render,
    render_depth,
    render_normals,
)

__all__ = [
    "BrownConradyPinhole",
    "CameraModel",
    "IdealPinhole",
    "TabulatedRays",
    "ConfigError",
    "DegenerateRay",
    "DimensionMismatch",
    "EmptyGraph",
    "EmptyMask",
    "MalformedHeader",
    "MapIoError",
    "NintError",
    "NonConvergentRoot",
    "NonConvergentUndistortion",
    "NonPositiveLogArgument",
    "NonUnitNormals",
    "OutOfBounds",
    "SingularSystem",
    "BetaParams",
    "GammaMode",
    "LambdaMode",
    "PairCoefficients",
    "alpha_from_depths",
    "beta_activation",
    "gamma_factor",
    "interp_lambda",
    "interp_tau_m",
    "local_plane_oracle",
    "log_rhs",
    "logistic",
    "pair_coefficients",
    "Connectivity",
    "PairGraph",
    "build_graph",
    "MetricsReport",
    "evaluate",
    "formulation_residuals",
    "made",
    "Outliers",
    "Rotational",
    "corrupt",
    "mitigation_filter",
    "IntegrationResult",
    "Method",
    "SolverConfig",
    "gauge_align",
    "integrate",
    "Plane",
    "Scene",
    "SphereCap",
    "StepPlanes",
    "Wave",
    "ground_truth_alpha",
    "render",
    "render_depth",
    "render_normals",
]

__version__ = "0.1.0"
