"""Gaussian second-moment integrals with principled truncation.

Evaluates tr(q) = E_{z~N(0,1)}[phi(sqrt(q) z)^2] by composite Gauss-Legendre
quadrature on a truncated window [-a, a], with the window chosen so each
one-sided tail of the unnormalized integrand phi(sqrt(q) z)^2 exp(-z^2/2)
carries at most half the requested tail mass.

Divergence is detected before integrating: the log-integrand is fitted with
c0 + c2*z^2 on the outermost probe decade and a nonnegative quadratic
coefficient means the integrand does not decay. Integration itself happens on
the log scale (exp(2*log|phi| - z^2/2)), so activations whose squared values
overflow float64 still produce a clean diverged signal via the 1e150 sentinel
instead of inf arithmetic.

Also home to the exact Gaussian total-variation distance, used as a reference
value elsewhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr, roots_legendre

from .activations import Activation

# Overflow sentinel shared with the simulator, on the log scale here.
OVERFLOW_LIMIT = 1e150
_LOG_OVERFLOW = np.log(OVERFLOW_LIMIT)

# Fitted z^2 coefficients this close to zero (or above) mean no decay. The
# boundary case 2*alpha*q = 1/2 lands exactly at 0 and must be flagged.
_DECAY_EPS = 1e-6

_GL_ORDER = 16


class DivergedError(Exception):
    """The defining integral does not exist (integrand fails to decay)."""


class NonConvergentError(Exception):
    """Panel budget exhausted before the tolerance was met."""


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_truncation: float = 40.0
    panels: int = 256
    tail_beta: float = 1e-12
    max_panels: int = 65536

    def __post_init__(self):
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_truncation < 8.0:
            raise ValueError("max_truncation must be >= 8")
        if self.panels < 64:
            raise ValueError("panels must be >= 64")
        if not (0.0 < self.tail_beta <= 1e-6):
            raise ValueError("tail_beta must lie in (0, 1e-6]")
        if self.max_panels < self.panels:
            raise ValueError("max_panels must be >= panels")


DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class GaussianMoment:
    value: float  # nan when diverged
    diverged: bool
    truncation_used: float
    truncation_certified: bool
    est_error: float
    q: float


class TruncationPoint(NamedTuple):
    a: float
    certified: bool


@lru_cache(maxsize=8)
def _gl_nodes(order: int):
    x, w = roots_legendre(order)
    return np.asarray(x), np.asarray(w)


def _log_integrand(act: Activation, q: float, z: np.ndarray) -> np.ndarray:
    # log of phi(sqrt(q) z)^2 exp(-z^2/2); -inf where phi vanishes
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        la = np.asarray(act.log_abs(np.sqrt(q) * z), dtype=float)
    return 2.0 * la - 0.5 * np.square(z)


def _decay_coefficient(act: Activation, q: float, a: float) -> float | None:
    """Fitted z^2 coefficient of the log-integrand on the outermost decade.

    Returns None when the integrand vanishes on the probe decade (treated as
    decaying). Both signs are probed; the worse (larger) coefficient wins.
    """
    worst = None
    for sign in (1.0, -1.0):
        z = sign * np.geomspace(a / 10.0, a, 96)
        ell = _log_integrand(act, q, z)
        good = np.isfinite(ell)
        if good.sum() < 8:
            continue
        design = np.stack([np.ones(good.sum()), np.square(z[good])], axis=1)
        coef, *_ = np.linalg.lstsq(design, ell[good], rcond=None)
        c2 = float(coef[1])
        worst = c2 if worst is None else max(worst, c2)
    return worst


def _panel_integrals(act: Activation, q: float, edges: np.ndarray) -> np.ndarray:
    """Integral of the unnormalized integrand over each [edges[i], edges[i+1]].

    Raises DivergedError when any integrand value passes the overflow sentinel.
    """
    nodes, weights = _gl_nodes(_GL_ORDER)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    z = mid[:, None] + half[:, None] * nodes[None, :]
    ell = _log_integrand(act, q, z)
    if np.max(ell) > _LOG_OVERFLOW:
        raise DivergedError(f"integrand exceeds {OVERFLOW_LIMIT:g} inside the window (q={q:g})")
    vals = np.exp(ell)
    out = half * (vals @ weights)
    if not np.all(np.isfinite(out)) or np.abs(out).max(initial=0.0) > OVERFLOW_LIMIT:
        raise DivergedError(f"panel sums exceed {OVERFLOW_LIMIT:g} (q={q:g})")
    return out


def tail_truncation_point(
    act: Activation, r: float, s: float, beta: float, spec: QuadratureSpec = DEFAULT_SPEC
) -> TruncationPoint:
    """Smallest window half-width a with both one-sided tails <= beta/2.

    The bound must hold uniformly over a 16-point grid of q in [r, s]. If it
    cannot be certified at max_truncation the capped value is returned with
    certified=False. Raises DivergedError when the integrand fails to decay
    for some q on the grid.
    """
    if not (0.0 < r <= s):
        raise ValueError("need 0 < r <= s")
    if beta <= 0.0:
        raise ValueError("beta must be positive")

    a_max = spec.max_truncation
    qs = np.unique(np.linspace(r, s, 16))
    segments = 512
    edges = np.linspace(0.0, a_max, segments + 1)

    # tail_sums[i] = max over q, sign of integral from edges[i] to a_max,
    # plus a Mills-style bound for the remainder beyond a_max.
    tail_sums = np.zeros(segments + 1)
    for q in qs:
        c2 = _decay_coefficient(act, q, a_max)
        if c2 is not None and c2 >= -_DECAY_EPS:
            raise DivergedError(
                f"tail mass does not decay for q={q:g} (fitted z^2 coefficient {c2:.3g})"
            )
        decay = max(-c2 if c2 is not None else 0.5, _DECAY_EPS)
        for sign in (1.0, -1.0):
            seg = _panel_integrals(act, q, sign * edges)
            if sign < 0:
                seg = -seg
            cum = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
            edge_val = float(np.exp(min(_log_integrand(act, q, np.array([sign * a_max]))[0], 700.0)))
            remainder = edge_val / (2.0 * decay * a_max)
            tail_sums = np.maximum(tail_sums, cum + remainder)

    ok = tail_sums <= beta / 2.0
    if not ok.any():
        return TruncationPoint(a_max, False)
    return TruncationPoint(float(edges[int(np.argmax(ok))]), True)


def gaussian_second_moment(
    act: Activation, q: float, spec: QuadratureSpec = DEFAULT_SPEC
) -> GaussianMoment:
    """E_{z~N(0,1)}[phi(sqrt(q) z)^2] by adaptive composite Gauss-Legendre.

    Panels are split at z = 0 so kinks and jumps there (relu, heaviside) sit
    on a panel boundary. Panel count doubles until two successive refinements
    agree within max(abs_tol, rel_tol * value). Divergence is reported in the
    result rather than raised; an exhausted panel budget raises
    NonConvergentError (integrable-looking but pathological integrand).
    """
    q = float(q)
    if q <= 0.0:
        raise ValueError("q must be positive (q = 0 never reaches quadrature)")

    c2 = _decay_coefficient(act, q, spec.max_truncation)
    if c2 is not None and c2 >= -_DECAY_EPS:
        return GaussianMoment(float("nan"), True, float("nan"), False, float("nan"), q)

    try:
        trunc = tail_truncation_point(act, q, q, spec.tail_beta, spec)
    except DivergedError:
        return GaussianMoment(float("nan"), True, float("nan"), False, float("nan"), q)

    a = trunc.a
    norm = 1.0 / np.sqrt(2.0 * np.pi)
    panels = spec.panels
    prev = None
    while panels <= spec.max_panels:
        per_side = max(panels // 2, 1)
        edges = np.concatenate([np.linspace(-a, 0.0, per_side + 1), np.linspace(0.0, a, per_side + 1)[1:]])
        try:
            value = norm * float(np.sum(_panel_integrals(act, q, edges)))
        except DivergedError:
            return GaussianMoment(float("nan"), True, a, trunc.certified, float("nan"), q)
        if prev is not None:
            err = abs(value - prev)
            if err <= max(spec.abs_tol, spec.rel_tol * abs(value)):
                return GaussianMoment(value, False, a, trunc.certified, err, q)
        prev = value
        panels *= 2
    raise NonConvergentError(
        f"no convergence within {spec.max_panels} panels for {act.name} at q={q:g} "
        f"(last refinement gap {abs(value - prev):.3g})"
    )


def gaussian_tv_distance(sigma1: float, sigma2: float) -> float:
    """Exact total-variation distance between N(0, sigma1^2) and N(0, sigma2^2).

    The centered normal densities cross at +-x* with
    x*^2 = 2 a^2 b^2 log(b/a) / (b^2 - a^2) for a < b, and the narrower
    density dominates between the crossings, so the distance is
    2*(Phi(x*/a) - Phi(x*/b)).
    """
    if sigma1 <= 0.0 or sigma2 <= 0.0:
        raise ValueError("standard deviations must be positive")
    if sigma1 == sigma2:
        return 0.0
    a, b = sorted((float(sigma1), float(sigma2)))
    x_star = np.sqrt(2.0 * a * a * b * b * np.log(b / a) / (b * b - a * a))
    return float(2.0 * (ndtr(x_star / a) - ndtr(x_star / b)))
