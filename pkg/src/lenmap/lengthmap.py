"""Deterministic width-infinite recursion for squared pre-activation norms.

Starting from qtilde_0 = trtilde_0 = 1, alternately applies

    qtilde_l = sigma_w^2 * trtilde_{l-1} + sigma_b^2
    trtilde_l = E_{z~N(0,1)}[phi(sqrt(qtilde_l) z)^2]

layer by layer. A diverged moment poisons every later layer: qtilde_{l+1}
needs trtilde_l, so nothing downstream is defined. qtilde = 0 (possible only
when both sigmas vanish, or phi(0) = 0 with sigma_b = 0) short-circuits to
trtilde = phi(0)^2 since the input distribution collapses to a point mass.

Fixed points are found by Picard iteration of q -> sigma_w^2 * tr(q) +
sigma_b^2 seeded with the image of the unit starting norm, q_1 = sigma_w^2 +
sigma_b^2. Seeding with the image rather than with 1 itself matters: when the
map is the identity (relu at sigma_w^2 = 2) every point is fixed and the seed
is the answer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import Activation
from .quadrature import (
    DEFAULT_SPEC,
    OVERFLOW_LIMIT,
    DivergedError,
    NonConvergentError,
    QuadratureSpec,
    gaussian_second_moment,
)

FINITE = "finite"
DIVERGED = "diverged"

# Fixed-point iterates beyond this are treated as escaping to infinity.
FIXED_POINT_CAP = 1e100


@dataclass(frozen=True)
class LengthMap:
    """Per-layer theoretical lengths, with nan marking unavailable entries."""

    activation: str
    sigma_w: float
    sigma_b: float
    depth: int
    qtilde: np.ndarray
    trtilde: np.ndarray
    q_finite: np.ndarray
    tr_finite: np.ndarray
    status: tuple[str, ...]

    def first_diverged_layer(self) -> int | None:
        for layer, state in enumerate(self.status):
            if state != FINITE:
                return layer
        return None

    def layers(self) -> range:
        return range(self.depth + 1)


def _tr_at(act: Activation, q: float, spec: QuadratureSpec) -> float:
    """Second moment at variance q, or nan when the integral does not exist.

    A quadrature that refuses to converge is reported as nan as well: the
    recursion cannot certify any downstream value either way.
    """
    if q == 0.0:
        return float(np.asarray(act(np.zeros(1)))[0]) ** 2
    try:
        moment = gaussian_second_moment(act, q, spec)
    except NonConvergentError:
        return float("nan")
    if moment.diverged:
        return float("nan")
    return moment.value


def compute_length_map(
    act: Activation,
    sigma_w: float,
    sigma_b: float,
    depth: int,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> LengthMap:
    if sigma_w < 0.0 or sigma_b < 0.0:
        raise ValueError("sigma_w and sigma_b must be nonnegative")
    if depth < 1:
        raise ValueError("depth must be at least 1")

    sw2 = sigma_w * sigma_w
    sb2 = sigma_b * sigma_b
    n = depth + 1
    qtilde = np.full(n, np.nan)
    trtilde = np.full(n, np.nan)
    q_finite = np.zeros(n, dtype=bool)
    tr_finite = np.zeros(n, dtype=bool)
    status: list[str] = []

    qtilde[0] = 1.0
    trtilde[0] = 1.0
    q_finite[0] = True
    tr_finite[0] = True
    status.append(FINITE)

    for layer in range(1, n):
        if not tr_finite[layer - 1]:
            status.append(DIVERGED)
            continue
        q = sw2 * trtilde[layer - 1] + sb2
        if not np.isfinite(q) or q > OVERFLOW_LIMIT:
            status.append(DIVERGED)
            continue
        qtilde[layer] = q
        q_finite[layer] = True
        tr = _tr_at(act, q, spec)
        if np.isfinite(tr) and tr <= OVERFLOW_LIMIT:
            trtilde[layer] = tr
            tr_finite[layer] = True
            status.append(FINITE)
        else:
            status.append(DIVERGED)

    return LengthMap(
        activation=act.name,
        sigma_w=float(sigma_w),
        sigma_b=float(sigma_b),
        depth=int(depth),
        qtilde=qtilde,
        trtilde=trtilde,
        q_finite=q_finite,
        tr_finite=tr_finite,
        status=tuple(status),
    )


def length_map_fixed_point(
    act: Activation,
    sigma_w: float,
    sigma_b: float,
    tol: float = 1e-10,
    max_iter: int = 200,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> float | None:
    """Picard iteration of q -> sigma_w^2 * tr(q) + sigma_b^2.

    Returns q* whose residual |q* - map(q*)| has been explicitly checked
    against tol, None when max_iter steps were not enough, and raises
    DivergedError when an iterate's moment diverges or the iterates escape
    past the cap.
    """
    if sigma_w <= 0.0:
        raise ValueError("sigma_w must be positive")
    if sigma_b < 0.0:
        raise ValueError("sigma_b must be nonnegative")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    sw2 = sigma_w * sigma_w
    sb2 = sigma_b * sigma_b

    def step(q: float) -> float:
        tr = _tr_at(act, q, spec)
        if not np.isfinite(tr):
            raise DivergedError(f"moment diverges at iterate q={q:g}")
        return sw2 * tr + sb2

    q = sw2 + sb2  # image of the unit starting norm
    steps = 0
    while steps < max_iter:
        if not np.isfinite(q) or q > FIXED_POINT_CAP:
            raise DivergedError(f"fixed-point iterates exceed {FIXED_POINT_CAP:g}")
        q_next = step(q)
        steps += 1
        if abs(q_next - q) <= tol:
            # candidate found; certify the residual at the candidate itself
            if steps >= max_iter:
                return None
            q_after = step(q_next)
            steps += 1
            if abs(q_after - q_next) <= tol:
                return q_next
            q = q_after
        else:
            q = q_next
    return None
