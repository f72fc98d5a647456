"""Statistical verification: convergence fractions, moment gaps, and fits.

Three experiment families share this module. Convergence reports count trials
whose per-layer lengths track the theoretical map within a tolerance, with
Wilson intervals on the counts. Cross-moment gaps estimate the dependence
between two captured units through E[a^2 b^2] - E[a^2]E[b^2], with a seeded
bootstrap for the standard error. Distribution fitting computes Cauchy and
Gaussian maximum-likelihood parameters and Kolmogorov-Smirnov statistics
against fully specified references.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .activations import Activation
from .lengthmap import LengthMap, compute_length_map
from .quadrature import DEFAULT_SPEC, QuadratureSpec
from .simulator import DeviationCheck, NetworkConfig, simulate_ensemble

Z95 = 1.959963984540054


class InsufficientSamplesError(ValueError):
    pass


class DegenerateSampleError(ValueError):
    pass


class UnsupportedActivationError(ValueError):
    pass


class MapDivergedError(RuntimeError):
    """The reference length map is undefined, so the report cannot exist."""


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    """95% (by default) score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("n must be positive")
    if not (0 <= successes <= n):
        raise ValueError("successes must lie in [0, n]")
    if successes == 0 or successes == n:
        # endpoints are exact; the formula only reproduces them up to rounding
        phat = successes / n
        z2 = z * z
        half_width = z * math.sqrt(z2 / (4 * n * n)) / (1.0 + z2 / n)
        center = (phat + z2 / (2 * n)) / (1.0 + z2 / n)
        return (0.0, center + half_width) if successes == 0 else (center - half_width, 1.0)
    phat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z2 / (4 * n * n)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def ks_statistic(samples, cdf) -> float:
    """sup_x |empirical CDF - cdf(x)| against a fully specified reference."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.shape[0]
    if n == 0:
        raise InsufficientSamplesError("need at least one sample")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max((i / n - f).max(), (f - (i - 1) / n).max()))


def cauchy_cdf(x, x0: float = 0.0, gamma: float = 1.0):
    return 0.5 + np.arctan((np.asarray(x, dtype=float) - x0) / gamma) / np.pi


def cauchy_pdf(x, x0: float = 0.0, gamma: float = 1.0):
    d = (np.asarray(x, dtype=float) - x0) / gamma
    return 1.0 / (np.pi * gamma * (1.0 + d * d))


def gaussian_cdf(x, sigma: float = 1.0):
    return ndtr(np.asarray(x, dtype=float) / sigma)


@dataclass(frozen=True)
class ConvergenceReport:
    widths: tuple[int, ...]
    epsilon: float
    trials: int
    fraction: np.ndarray  # joint success per width
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    layer_fraction: np.ndarray  # (widths, layers 0..D)
    layer_ci_lo: np.ndarray
    layer_ci_hi: np.ndarray
    overflow: np.ndarray
    length_map: LengthMap


def convergence_report(
    act: Activation,
    sigma_w: float,
    sigma_b: float,
    depth: int,
    widths,
    trials: int,
    epsilon: float,
    seed: int = 0,
    input_spec="ones",
    workers: int | None = None,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> ConvergenceReport:
    widths = tuple(int(w) for w in widths)
    if len(widths) == 0 or any(b <= a for a, b in zip(widths, widths[1:])):
        raise ValueError("widths must be nonempty and strictly increasing")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")

    lm = compute_length_map(act, sigma_w, sigma_b, depth, spec)
    if lm.first_diverged_layer() is not None:
        raise MapDivergedError(
            f"length map for {act.name} diverges at layer {lm.first_diverged_layer()}"
        )
    check = DeviationCheck(qtilde=lm.qtilde, epsilon=epsilon)

    nw = len(widths)
    fraction = np.empty(nw)
    ci_lo = np.empty(nw)
    ci_hi = np.empty(nw)
    layer_fraction = np.empty((nw, depth + 1))
    layer_ci_lo = np.empty((nw, depth + 1))
    layer_ci_hi = np.empty((nw, depth + 1))
    overflow = np.zeros(nw, dtype=int)

    for k, width in enumerate(widths):
        cfg = NetworkConfig(
            width=width, depth=depth, sigma_w=sigma_w, sigma_b=sigma_b,
            activation=act, input_spec=input_spec, master_seed=seed,
        )
        stats = simulate_ensemble(cfg, trials, check=check, workers=workers)
        attempts = stats.trial_count + stats.overflow_count
        overflow[k] = stats.overflow_count
        fraction[k] = stats.success_joint / attempts
        ci_lo[k], ci_hi[k] = wilson_interval(stats.success_joint, attempts)
        for layer in range(depth + 1):
            s = int(stats.success_layers[layer])
            layer_fraction[k, layer] = s / attempts
            layer_ci_lo[k, layer], layer_ci_hi[k, layer] = wilson_interval(s, attempts)

    return ConvergenceReport(
        widths=widths, epsilon=epsilon, trials=trials,
        fraction=fraction, ci_lo=ci_lo, ci_hi=ci_hi,
        layer_fraction=layer_fraction, layer_ci_lo=layer_ci_lo, layer_ci_hi=layer_ci_hi,
        overflow=overflow, length_map=lm,
    )


@dataclass(frozen=True)
class CrossMomentResult:
    gap_estimate: float
    std_error: float
    theoretical_gap: float
    z_score: float
    pair_count: int


def cross_moment_gap(pairs, theoretical: float = float("nan"),
                     bootstrap_seed: int = 0, resamples: int = 200) -> CrossMomentResult:
    """Plug-in estimate of E[a^2 b^2] - E[a^2] E[b^2] with bootstrap SE."""
    p = np.asarray(pairs, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2:
        raise ValueError("pairs must be an (n, 2) array")
    n = p.shape[0]
    if n < 1000:
        raise InsufficientSamplesError(f"need at least 1000 pairs, got {n}")

    a2 = p[:, 0] ** 2
    b2 = p[:, 1] ** 2

    def gap_of(idx) -> float:
        return float(np.mean(a2[idx] * b2[idx]) - np.mean(a2[idx]) * np.mean(b2[idx]))

    every = np.arange(n)
    gap = gap_of(every)
    rng = np.random.default_rng(bootstrap_seed)
    boots = np.empty(resamples)
    for k in range(resamples):
        boots[k] = gap_of(rng.integers(0, n, n))
    se = float(np.std(boots, ddof=1))
    z = gap / se if se > 0 else float("inf") if gap != 0 else 0.0
    return CrossMomentResult(gap_estimate=gap, std_error=se,
                             theoretical_gap=float(theoretical), z_score=z, pair_count=n)


def theoretical_gap(act, sigma_w: float, sigma_b: float, n_width: int) -> float:
    """Closed-form cross-moment gap; defined for heaviside and relu only."""
    name = act.name if isinstance(act, Activation) else str(act)
    if n_width < 1:
        raise ValueError("width must be positive")
    if name == "heaviside":
        return 3.0 * sigma_w**4 / (4.0 * n_width)
    if name == "relu":
        return 5.0 * sigma_w**8 / (4.0 * n_width)
    raise UnsupportedActivationError(f"no closed-form gap for {name!r}")


@dataclass(frozen=True)
class DistributionFit:
    cauchy_x0: float
    cauchy_gamma: float
    gaussian_sigma: float
    ks_vs_cauchy: float
    ks_vs_gaussian: float
    sample_count: int


def _cauchy_loglik(x: np.ndarray, x0: float, gamma: float) -> float:
    return float(x.shape[0] * math.log(gamma)
                 - np.log(gamma * gamma + (x - x0) ** 2).sum())


def _cauchy_mle(x: np.ndarray) -> tuple[float, float]:
    """Newton ascent on (x0, gamma); golden-section on gamma as fallback."""
    n = x.shape[0]
    q1, q2, q3 = np.percentile(x, [25.0, 50.0, 75.0])
    x0 = float(q2)
    gamma = float(max((q3 - q1) / 2.0, 1e-12 * (1.0 + abs(x0))))
    scale = gamma

    ok = True
    for _ in range(100):
        d = x - x0
        s = gamma * gamma + d * d
        g0 = float((2.0 * d / s).sum())
        g1 = float(n / gamma - (2.0 * gamma / s).sum())
        s2 = s * s
        h00 = float((2.0 * (d * d - gamma * gamma) / s2).sum())
        h01 = float((-4.0 * gamma * d / s2).sum())
        h11 = float(-n / (gamma * gamma) + (2.0 * (gamma * gamma - d * d) / s2).sum())
        det = h00 * h11 - h01 * h01
        if not np.isfinite(det) or det == 0.0:
            ok = False
            break
        step0 = (h11 * g0 - h01 * g1) / det
        step1 = (h00 * g1 - h01 * g0) / det
        new_x0 = x0 - step0
        new_gamma = gamma - step1
        if not np.isfinite(new_gamma) or new_gamma <= 0.0:
            ok = False
            break
        moved = abs(new_x0 - x0) + abs(new_gamma - gamma)
        x0, gamma = new_x0, new_gamma
        if moved <= 1e-12 * (abs(x0) + gamma + 1.0):
            break
    if ok and np.isfinite(gamma) and gamma > 0.0:
        return x0, gamma

    # profile search: x0 held at the median, gamma bracketed geometrically
    x0 = float(q2)
    lo, hi = scale * 1e-6, scale * 1e6
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(lo), math.log(hi)
    c = b - invphi * (b - a)
    d_ = a + invphi * (b - a)
    fc = _cauchy_loglik(x, x0, math.exp(c))
    fd = _cauchy_loglik(x, x0, math.exp(d_))
    for _ in range(200):
        if fc > fd:
            b, d_, fd = d_, c, fc
            c = b - invphi * (b - a)
            fc = _cauchy_loglik(x, x0, math.exp(c))
        else:
            a, c, fc = c, d_, fd
            d_ = a + invphi * (b - a)
            fd = _cauchy_loglik(x, x0, math.exp(d_))
        if b - a <= 1e-12:
            break
    return x0, math.exp((a + b) / 2.0)


def fit_and_test_distribution(samples, reference=None) -> DistributionFit:
    """MLE fits plus KS statistics against the chosen reference.

    reference: None (test each family against its own fit),
    ("cauchy", x0, gamma), or ("gaussian", sigma). The family not named by
    the reference is always tested against its fitted parameters.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.shape[0] < 100:
        raise InsufficientSamplesError(f"need at least 100 samples, got {x.shape[0]}")
    if np.all(x == x[0]):
        raise DegenerateSampleError("all samples identical")

    gaussian_sigma = float(np.sqrt(np.mean(x * x)))
    cauchy_x0, cauchy_gamma = _cauchy_mle(x)

    ref_cauchy = (cauchy_x0, cauchy_gamma)
    ref_gauss = gaussian_sigma
    if reference is not None:
        kind = reference[0]
        if kind == "cauchy":
            ref_cauchy = (float(reference[1]), float(reference[2]))
        elif kind == "gaussian":
            ref_gauss = float(reference[1])
        else:
            raise ValueError(f"unknown reference family: {kind!r}")

    ks_c = ks_statistic(x, lambda v: cauchy_cdf(v, *ref_cauchy))
    ks_g = ks_statistic(x, lambda v: gaussian_cdf(v, ref_gauss))
    return DistributionFit(
        cauchy_x0=cauchy_x0, cauchy_gamma=cauchy_gamma, gaussian_sigma=gaussian_sigma,
        ks_vs_cauchy=ks_c, ks_vs_gaussian=ks_g, sample_count=int(x.shape[0]),
    )


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray  # bins + 1 interior edges
    counts: np.ndarray  # per interior bin
    underflow: int
    overflow: int

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.underflow + self.overflow


def histogram(samples, bins: int, lo: float, hi: float) -> Histogram:
    """Fixed-range histogram; out-of-range mass lands in overflow bins."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if not lo < hi:
        raise ValueError("need lo < hi")
    x = np.asarray(samples, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    under = int(np.sum(x < lo))
    over = int(np.sum(x > hi))
    return Histogram(edges=edges, counts=counts.astype(np.int64),
                     underflow=under, overflow=over)
