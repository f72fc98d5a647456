"""Length-map analysis of wide random networks.

The package answers three related questions about a fully connected random
network h_l = W_l x_{l-1} + b_l, x_l = phi(h_l) with Gaussian weights of
standard deviation sigma_w / sqrt(N) and biases of standard deviation sigma_b:

* theory: the deterministic layer-length recursion and its fixed points
  (``compute_length_map``, ``length_map_fixed_point``), built on adaptive
  Gaussian quadrature that flags divergent integrals instead of returning
  garbage (``gaussian_second_moment``);
* simulation: reproducible finite-width ensembles with counter-based random
  streams, raw value capture, and parallel trial execution
  (``simulate_ensemble``);
* statistics: concentration of simulated lengths around the theory curve
  (``convergence_report``), heavy-tail distribution fitting
  (``fit_and_test_distribution``), and cross-unit dependence measurement
  (``cross_moment_gap``).

Everything is deterministic given the master seed; see ``lenmap.cli`` for the
command-line entry points.
"""

__version__ = "0.1.0"

from .activations import (
    Activation,
    HEAVISIDE,
    IDENTITY,
    PermissibilityReport,
    ProbeGrid,
    RECIPROCAL,
    RELU,
    TANH,
    audit_permissibility,
    exp_square,
    parse_activation,
    scaled,
)
from .quadrature import (
    DEFAULT_SPEC,
    DivergedError,
    GaussianMoment,
    NonConvergentError,
    QuadratureSpec,
    TruncationPoint,
    gaussian_second_moment,
    gaussian_tv_distance,
    tail_truncation_point,
)
from .lengthmap import (
    DIVERGED,
    FINITE,
    LengthMap,
    compute_length_map,
    length_map_fixed_point,
)
from .simulator import (
    CaptureSpec,
    DeviationCheck,
    EnsembleStats,
    LayerObservables,
    LayerOverflowError,
    NetworkConfig,
    forward_once,
    input_vector,
    resolve_workers,
    simulate_ensemble,
)
from .stats import (
    ConvergenceReport,
    CrossMomentResult,
    DegenerateSampleError,
    DistributionFit,
    Histogram,
    InsufficientSamplesError,
    MapDivergedError,
    UnsupportedActivationError,
    cauchy_cdf,
    cauchy_pdf,
    convergence_report,
    cross_moment_gap,
    fit_and_test_distribution,
    gaussian_cdf,
    histogram,
    ks_statistic,
    theoretical_gap,
    wilson_interval,
)

__all__ = [
    "__version__",
    "Activation", "RELU", "HEAVISIDE", "IDENTITY", "TANH", "RECIPROCAL",
    "exp_square", "scaled", "parse_activation",
    "ProbeGrid", "PermissibilityReport", "audit_permissibility",
    "QuadratureSpec", "DEFAULT_SPEC", "GaussianMoment", "TruncationPoint",
    "DivergedError", "NonConvergentError",
    "gaussian_second_moment", "gaussian_tv_distance", "tail_truncation_point",
    "LengthMap", "FINITE", "DIVERGED",
    "compute_length_map", "length_map_fixed_point",
    "NetworkConfig", "CaptureSpec", "DeviationCheck", "LayerObservables",
    "LayerOverflowError", "EnsembleStats",
    "forward_once", "input_vector", "simulate_ensemble", "resolve_workers",
    "ConvergenceReport", "CrossMomentResult", "DistributionFit", "Histogram",
    "InsufficientSamplesError", "DegenerateSampleError",
    "UnsupportedActivationError", "MapDivergedError",
    "wilson_interval", "ks_statistic", "cauchy_cdf", "cauchy_pdf",
    "gaussian_cdf", "convergence_report", "cross_moment_gap",
    "theoretical_gap", "fit_and_test_distribution", "histogram",
]
